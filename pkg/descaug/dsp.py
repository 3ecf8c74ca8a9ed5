"""
Spectral primitives shared by the descriptors: STFT magnitude, mel
spectrogram and the mel-domain spectral centroid.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache

import librosa
import numpy as np
from scipy.signal import get_window

from .audio_io import AudioBuffer
from .errors import AppError, ErrorContext, ErrorType, ensure

logger = logging.getLogger(__name__)

FRAME_SIZE = 2048
HOP = 512
N_MELS = 128
FMIN = 20.0
FMAX = 24000.0
WINDOWS = ("hann",)


@dataclass(frozen=True, eq=False)
class Spectrogram:
    """Magnitudes laid out frames x bins."""
    magnitudes: np.ndarray
    frame_size: int
    hop: int
    sample_rate: int
    window: str = "hann"

    @property
    def n_frames(self) -> int:
        return int(self.magnitudes.shape[0])

    @property
    def n_bins(self) -> int:
        return int(self.magnitudes.shape[1])


@dataclass(frozen=True, eq=False)
class MelSpectrogram:
    """Linear-scale power per frame and mel band (frames x n_mels)."""
    energies: np.ndarray
    n_mels: int
    fmin: float
    fmax: float
    sample_rate: int
    frame_size: int
    hop: int

    @property
    def n_frames(self) -> int:
        return int(self.energies.shape[0])


def frame_count(n_samples: int, frame_size: int, hop: int) -> int:
    if n_samples < frame_size:
        return 0
    return 1 + (n_samples - frame_size) // hop


def _check_frames(frame_size: int, hop: int, window: str = "hann") -> None:
    ensure(frame_size > 0 and frame_size & (frame_size - 1) == 0,
           f"frame_size must be a power of two, got {frame_size}", ErrorType.INVALID_PARAMETER)
    ensure(0 < hop <= frame_size, f"hop must be in (0, frame_size], got {hop}", ErrorType.INVALID_PARAMETER)
    ensure(window in WINDOWS, f"unsupported window {window!r}", ErrorType.INVALID_PARAMETER)


def stft_magnitude(buf: AudioBuffer, frame_size: int = FRAME_SIZE, hop: int = HOP,
                   window: str = "hann") -> Spectrogram:
    """Magnitude of the windowed DFT per frame, no padding at the edges.

    A signal shorter than one frame yields an empty spectrogram.
    """
    _check_frames(frame_size, hop, window)
    ensure(buf.is_mono, "stft_magnitude expects mono audio")
    n_bins = frame_size // 2 + 1
    if len(buf) < frame_size:
        return Spectrogram(np.zeros((0, n_bins)), frame_size, hop, buf.sample_rate, window)

    stft = librosa.stft(buf.samples, n_fft=frame_size, hop_length=hop, window=window, center=False)
    return Spectrogram(np.abs(stft).T, frame_size, hop, buf.sample_rate, window)


def spectrogram_energy(spec: Spectrogram) -> float:
    """Time-domain energy implied by a spectrogram.

    Undoes the one-sided spectrum, the DFT scaling and the energy the window
    overlap adds, so the result is comparable with sum(x**2).
    """
    if spec.n_frames == 0:
        return 0.0
    weights = np.full(spec.n_bins, 2.0)
    weights[0] = 1.0
    weights[-1] = 1.0
    window = get_window(spec.window, spec.frame_size, fftbins=True)
    per_frame = (spec.magnitudes ** 2 @ weights) / spec.frame_size
    overlap_gain = np.sum(window ** 2) / spec.hop
    return float(per_frame.sum() / overlap_gain)


@lru_cache(maxsize=32)
def mel_filterbank(sample_rate: int, frame_size: int, n_mels: int, fmin: float, fmax: float) -> np.ndarray:
    """Triangular HTK-scale filters, shape (n_mels, frame_size // 2 + 1); read-only."""
    weights = librosa.filters.mel(sr=sample_rate, n_fft=frame_size, n_mels=n_mels,
                                  fmin=fmin, fmax=fmax, htk=True, norm=None)
    weights = np.asarray(weights, dtype=np.float64)

    # A filter narrower than the bin spacing can miss every bin; give it the
    # bin nearest its centre so each band has positive mass.
    empty = np.flatnonzero(weights.sum(axis=1) <= 0)
    if empty.size:
        centres = librosa.mel_frequencies(n_mels=n_mels + 2, fmin=fmin, fmax=fmax, htk=True)[1:-1]
        bin_hz = sample_rate / frame_size
        for band in empty:
            weights[band, int(round(centres[band] / bin_hz))] = 1.0
        logger.debug("Filled %d empty mel filters", empty.size)

    weights.setflags(write=False)
    return weights


def mel_spectrogram(buf: AudioBuffer, frame_size: int = FRAME_SIZE, hop: int = HOP,
                    n_mels: int = N_MELS, fmin: float = FMIN, fmax: float = FMAX) -> MelSpectrogram:
    """Power spectrogram projected through the mel filterbank."""
    ensure(0 < fmin < fmax <= buf.sample_rate / 2,
           f"need 0 < fmin < fmax <= {buf.sample_rate / 2:g} Hz, got fmin={fmin:g}, fmax={fmax:g}",
           ErrorType.INVALID_PARAMETER)
    ensure(n_mels >= 2, f"n_mels must be at least 2, got {n_mels}", ErrorType.INVALID_PARAMETER)
    spec = stft_magnitude(buf, frame_size, hop)
    fb = mel_filterbank(buf.sample_rate, frame_size, n_mels, float(fmin), float(fmax))
    energies = (spec.magnitudes ** 2) @ fb.T
    return MelSpectrogram(energies, n_mels, float(fmin), float(fmax), buf.sample_rate, frame_size, hop)


def spectral_centroid_mel(mel: MelSpectrogram) -> float:
    """Energy-weighted mean of per-frame mel-bin centroids.

    Silent frames carry no weight, so padding a clip with silence does not
    move its centroid.
    """
    energies = mel.energies
    frame_energy = energies.sum(axis=1) if energies.size else np.zeros(0)
    voiced = frame_energy > 0
    if not np.any(voiced):
        raise AppError("mel spectrogram has no energy", ErrorType.UNDEFINED_CENTROID,
                       ErrorContext(operation="spectral_centroid_mel"))

    bins = np.arange(mel.n_mels, dtype=np.float64)
    per_frame = (energies[voiced] @ bins) / frame_energy[voiced]
    centroid = float(np.sum(per_frame * frame_energy[voiced]) / np.sum(frame_energy[voiced]))
    return float(np.clip(centroid, 0.0, mel.n_mels - 1))
