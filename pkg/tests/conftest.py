"""
Shared fixtures: synthetic signals and WAV files.
"""

import os
import sys

import numpy as np
import pytest

# Make the project root importable
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from descaug.audio_io import AudioBuffer, save_audio  # noqa: E402

RATE = 48000


def make_sine(freq, seconds=1.0, amp=1.0, rate=RATE):
    t = np.arange(int(round(seconds * rate))) / rate
    return AudioBuffer(amp * np.sin(2 * np.pi * freq * t), rate)


def make_noise(seconds=1.0, amp=0.1, seed=0, rate=RATE):
    rng = np.random.default_rng(seed)
    return AudioBuffer(np.clip(amp * rng.standard_normal(int(round(seconds * rate))), -1, 1), rate)


def make_burst(seed=0, seconds=1.0, onset_s=0.1, decay_s=0.005, amp=0.9, rate=RATE):
    """Noise burst with a fast exponential decay, surrounded by silence."""
    rng = np.random.default_rng(seed)
    n = int(round(seconds * rate))
    x = np.zeros(n)
    start = int(round(onset_s * rate))
    length = min(n - start, int(round(10 * decay_s * rate)))
    env = np.exp(-np.arange(length) / (decay_s * rate))
    x[start:start + length] = rng.standard_normal(length) * env
    x *= amp / np.max(np.abs(x))
    return AudioBuffer(x, rate)


@pytest.fixture
def sine():
    return make_sine


@pytest.fixture
def noise():
    return make_noise


@pytest.fixture
def burst():
    return make_burst


@pytest.fixture
def wav_file(tmp_path):
    """Write a buffer to tmp_path and return the path."""
    def write(name, buf, bit_depth="float32"):
        path = tmp_path / name
        save_audio(path, buf, bit_depth)
        return path
    return write
