#!/usr/bin/env python3
"""
Tests for descriptor measurement, classification and analysis.
"""

import numpy as np
import pytest

from descaug.audio_io import AudioBuffer, resample
from descaug.augment import AugmentationPlan, synthesize_impulse_response
from descaug.config import ThresholdConfig
from descaug.descriptors import (
    Brightness,
    DescriptorSet,
    Fade,
    Loudness,
    Noise,
    Pitch,
    Reverb,
    analyze,
    classify_brightness,
    classify_loudness,
    classify_noise,
    classify_pitch,
    duration_label,
    estimate_pitch_octave,
    estimate_rt60,
    estimate_snr,
    measure_loudness_lkfs,
)
from descaug.dsp import MelSpectrogram, mel_spectrogram
from descaug.errors import AppError, ErrorType


def scan(lo, hi):
    """Values lo..hi inclusive at 0.01 spacing, exactly representable boundaries."""
    return [i / 100 for i in range(int(round(lo * 100)), int(round(hi * 100)) + 1)]


class TestCategoryBoundaries:
    """Exhaustive threshold scans at 0.01 resolution."""

    def test_loudness_scan(self):
        def expected(v):
            if v < -70:
                return None
            if v < -55:
                return Loudness.VERY_SOFT
            if v < -40:
                return Loudness.SOFT
            if v < -30:
                return None
            if v < -15:
                return Loudness.LOUD
            return Loudness.VERY_LOUD

        for v in scan(-80, 0):
            assert classify_loudness(v) == expected(v), v

    @pytest.mark.parametrize("value,category", [
        (-70.0, Loudness.VERY_SOFT),
        (-55.0, Loudness.SOFT),
        (-40.0, None),
        (-30.01, None),
        (-30.0, Loudness.LOUD),
        (-15.0, Loudness.VERY_LOUD),
        (-70.01, None),
    ])
    def test_loudness_edges(self, value, category):
        assert classify_loudness(value) == category

    def test_pitch_scan(self):
        for v in scan(0, 6):
            want = Pitch.LOW if v < 1.5 else Pitch.HIGH if v > 3.5 else None
            assert classify_pitch(v) == want, v
        assert classify_pitch(1.5) is None
        assert classify_pitch(3.5) is None

    def test_brightness_scan(self):
        for v in scan(0, 127):
            want = Brightness.DULL if v < 45 else Brightness.BRIGHT if v > 65 else None
            assert classify_brightness(v) == want, v
        assert classify_brightness(45.0) is None
        assert classify_brightness(65.0) is None

    def test_noise_scan(self):
        for v in scan(0, 30):
            want = Noise.NOISY_BACKGROUND if v <= 2 else Noise.SILENT_BACKGROUND if v >= 6 else None
            assert classify_noise(v) == want, v
        assert classify_noise(2.0) == Noise.NOISY_BACKGROUND
        assert classify_noise(6.0) == Noise.SILENT_BACKGROUND

    def test_custom_thresholds(self):
        cfg = ThresholdConfig(pitch_low_max=2.0, pitch_high_min=2.5)
        assert classify_pitch(1.9, cfg) == Pitch.LOW
        assert classify_pitch(2.6, cfg) == Pitch.HIGH


class TestLoudness:
    """BS.1770 integrated loudness."""

    def test_full_scale_997hz(self, sine):
        assert measure_loudness_lkfs(sine(997.0, seconds=3.0)) == pytest.approx(-3.01, abs=0.1)

    @pytest.mark.parametrize("gain", [0.5, 0.25, 0.1])
    def test_gain_law(self, sine, gain):
        ref = measure_loudness_lkfs(sine(997.0, seconds=3.0))
        scaled = measure_loudness_lkfs(sine(997.0, seconds=3.0, amp=gain))
        assert scaled - ref == pytest.approx(20 * np.log10(gain), abs=0.1)

    def test_too_short(self, sine):
        with pytest.raises(AppError) as exc:
            measure_loudness_lkfs(sine(997.0, seconds=0.3))
        assert exc.value.error_type == ErrorType.TOO_SHORT

    def test_silence_below_gate(self):
        with pytest.raises(AppError) as exc:
            measure_loudness_lkfs(AudioBuffer(np.zeros(48000), 48000))
        assert exc.value.error_type == ErrorType.BELOW_GATE


class TestPitch:
    """YIN octave estimation."""

    @pytest.mark.parametrize("freq", [32.7, 55.0, 110.0, 440.0, 880.0])
    def test_sine_octave(self, sine, freq):
        estimate = estimate_pitch_octave(sine(freq, seconds=1.0, amp=0.5))
        assert estimate.octave == pytest.approx(np.log2(freq / 16.3516), abs=0.05)
        assert estimate.voiced_fraction > 0.9

    def test_classification_of_sines(self, sine):
        assert classify_pitch(estimate_pitch_octave(sine(32.7)).octave) == Pitch.LOW
        assert classify_pitch(estimate_pitch_octave(sine(440.0)).octave) == Pitch.HIGH

    def test_quiet_tone_still_voiced(self, sine):
        """Peak normalization makes voicing independent of gain."""
        estimate = estimate_pitch_octave(sine(220.0, amp=0.001))
        assert estimate.octave == pytest.approx(np.log2(220.0 / 16.3516), abs=0.05)

    def test_white_noise_unvoiced(self, noise):
        unvoiced = 0
        for seed in range(10):
            try:
                estimate_pitch_octave(noise(seconds=1.0, amp=0.3, seed=seed))
            except AppError as e:
                assert e.error_type == ErrorType.UNVOICED
                unvoiced += 1
        assert unvoiced >= 9

    def test_too_short(self, sine):
        with pytest.raises(AppError) as exc:
            estimate_pitch_octave(sine(440.0, seconds=0.05))
        assert exc.value.error_type == ErrorType.TOO_SHORT


class TestNoise:
    """Mel-frame SNR."""

    def test_burst_in_silence_is_silent_background(self, burst):
        for seed in range(10):
            snr = estimate_snr(mel_spectrogram(burst(seed=seed)))
            assert classify_noise(snr) == Noise.SILENT_BACKGROUND

    def test_stationary_noise_is_noisy_background(self, noise):
        for seed in range(10):
            snr = estimate_snr(mel_spectrogram(noise(seconds=2.0, amp=0.2, seed=seed)))
            assert classify_noise(snr) == Noise.NOISY_BACKGROUND

    def test_non_negative_and_gain_invariant(self, burst, noise):
        for buf in (burst(seed=1), noise(seconds=2.0, amp=0.2, seed=3)):
            a = estimate_snr(mel_spectrogram(buf))
            b = estimate_snr(mel_spectrogram(buf.with_samples(buf.samples * 0.25)))
            assert a >= 0
            assert b == pytest.approx(a, rel=1e-6)
            assert classify_noise(b) == classify_noise(a)

    def test_quiet_clip_with_digital_silence(self):
        energies = np.zeros((100, 128))
        energies[20:] = 2e-9
        mel = MelSpectrogram(energies, 128, 20.0, 24000.0, 48000, 2048, 512)
        scaled = MelSpectrogram(energies * 0.0625, 128, 20.0, 24000.0, 48000, 2048, 512)
        assert classify_noise(estimate_snr(mel)) == Noise.SILENT_BACKGROUND
        assert classify_noise(estimate_snr(scaled)) == Noise.SILENT_BACKGROUND

    def test_constant_tone_has_no_level_spread(self, sine):
        snr = estimate_snr(mel_spectrogram(sine(1000.0, seconds=2.0, amp=0.5)))
        assert snr == pytest.approx(0.0, abs=0.5)

    def test_too_few_frames(self, noise):
        with pytest.raises(AppError) as exc:
            estimate_snr(mel_spectrogram(noise(seconds=0.1)))
        assert exc.value.error_type == ErrorType.TOO_SHORT


class TestRt60:
    """Schroeder decay estimation."""

    @pytest.mark.parametrize("rt60", [0.3, 0.8, 1.8])
    def test_recovers_synthetic_ir(self, rt60):
        ir = synthesize_impulse_response(rt60, 48000, seed=11)
        assert estimate_rt60(ir) == pytest.approx(rt60, rel=0.2)

    def test_single_impulse(self):
        x = np.zeros(48000)
        x[1000] = 1.0
        assert estimate_rt60(AudioBuffer(x, 48000)) < 0.05

    def test_dry_burst_is_short(self, burst):
        assert estimate_rt60(burst(seed=2)) < 0.15

    @pytest.mark.parametrize("samples", [
        np.linspace(0.0, 1.0, 48000),
        np.sin(2 * np.pi * 440 * np.arange(48000) / 48000),
        np.zeros(48000),
    ], ids=["rising", "constant-tone", "silence"])
    def test_no_decay(self, samples):
        with pytest.raises(AppError) as exc:
            estimate_rt60(AudioBuffer(samples, 48000))
        assert exc.value.error_type == ErrorType.NO_DECAY


class TestAnalyze:
    """Descriptor composition."""

    def test_silence_only_duration(self):
        ds = analyze(AudioBuffer(np.zeros(96000), 48000))
        assert ds.categories() == [("duration", "2 seconds")]
        assert ds.loudness_lkfs is None and ds.snr_db is None and ds.pitch_octave is None

    def test_tone(self, sine):
        ds = analyze(sine(40.0, seconds=3.0, amp=0.9))
        assert ds.loudness_cat == Loudness.VERY_LOUD
        assert ds.pitch_cat == Pitch.LOW
        assert ds.brightness_cat == Brightness.DULL
        assert ds.duration_s == pytest.approx(3.0)
        assert ds.reverb_cat is None and ds.fade_cat is None

    def test_plan_labels_are_copied(self, sine):
        plan = AugmentationPlan(seed=1, reverb=Reverb.WET, fade=Fade.OUT)
        ds = analyze(sine(440.0), applied=plan)
        assert ds.reverb_cat == Reverb.WET
        assert ds.fade_cat == Fade.OUT

    def test_resamples_non_canonical_input(self, sine):
        ds = analyze(sine(440.0, seconds=2.0, rate=44100))
        assert ds.duration_s == pytest.approx(2.0, abs=1e-4)
        assert ds.pitch_octave == pytest.approx(np.log2(440.0 / 16.3516), abs=0.05)

    def test_empty_audio(self):
        with pytest.raises(AppError):
            analyze(AudioBuffer(np.zeros(0), 48000))

    def test_parameter_errors_are_not_swallowed(self, sine, monkeypatch):
        def broken(buf, cfg):
            raise AppError("rt60_fit_end_db out of range", ErrorType.INVALID_PARAMETER)

        monkeypatch.setattr("descaug.descriptors.estimate_rt60", broken)
        with pytest.raises(AppError) as exc:
            analyze(sine(440.0))
        assert exc.value.error_type == ErrorType.INVALID_PARAMETER

    @pytest.mark.parametrize("freq,amp", [(40.0, 0.9), (440.0, 0.5), (3000.0, 0.1)])
    def test_categories_independent_of_source_rate(self, sine, freq, amp):
        native = analyze(sine(freq, seconds=2.0, amp=amp))
        cd_rate = sine(freq, seconds=2.0, amp=amp, rate=44100)
        assert analyze(cd_rate).categories() == native.categories()
        assert analyze(resample(cd_rate, 48000)).categories() == native.categories()

    def test_serialization(self, sine):
        ds = analyze(sine(440.0, amp=0.1), applied=AugmentationPlan(seed=0, reverb=Reverb.DRY))
        data = ds.to_dict()
        assert data["reverb"] == "dry"
        assert data["duration"] == "1 seconds"
        restored = DescriptorSet.from_dict(data)
        assert restored.categories() == ds.categories()

    @pytest.mark.parametrize("seconds,label", [(2.49, 2), (2.5, 3), (3.0, 3), (0.4, 0)])
    def test_duration_rounds_half_up(self, seconds, label):
        assert duration_label(seconds) == label


pytestmark = [pytest.mark.unit, pytest.mark.dsp]
