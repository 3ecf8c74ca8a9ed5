"""
Acoustic descriptor measurement and classification.

Each descriptor has a measurement (loudness in LKFS, pitch in octaves above
C0, SNR in dB, brightness as a mel-bin centroid, reverb as RT60 seconds) and
a classifier that maps the value into the caption vocabulary, or to None when
the value falls into an uncategorized gap. `analyze` composes all of them.
"""

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import TYPE_CHECKING, Callable, Dict, List, Optional, Tuple, TypeVar

import numpy as np
import pyloudnorm
from numpy.lib.stride_tricks import sliding_window_view
from scipy.stats import linregress

from .audio_io import AudioBuffer, canonicalize
from .config import DESCRIPTOR_KEYS, ThresholdConfig
from .dsp import MelSpectrogram, mel_spectrogram, spectral_centroid_mel
from .errors import AppError, ErrorContext, ErrorType, ensure, too_short_error

if TYPE_CHECKING:
    from .augment import AugmentationPlan

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLDS = ThresholdConfig()

# The -25 dB point of a real decay must come before this fraction of the
# post-peak signal; later than that the integral is just running out of samples.
RT60_MAX_FIT_END_FRACTION = 0.9

V = TypeVar("V")


class Category(str, Enum):
    """Enum whose caption form replaces underscores with spaces."""

    @property
    def surface(self) -> str:
        return self.value.replace("_", " ")

    @classmethod
    def from_surface(cls, text: str) -> "Category":
        key = text.strip().replace(" ", "_")
        return cls(key)

    @classmethod
    def surfaces(cls) -> List[str]:
        return [member.surface for member in cls]


class Loudness(Category):
    VERY_SOFT = "very_soft"
    SOFT = "soft"
    LOUD = "loud"
    VERY_LOUD = "very_loud"


class Pitch(Category):
    LOW = "low"
    HIGH = "high"


class Reverb(Category):
    DRY = "dry"
    SLIGHTLY_WET = "slightly_wet"
    WET = "wet"
    VERY_WET = "very_wet"


class Noise(Category):
    SILENT_BACKGROUND = "silent_background"
    NOISY_BACKGROUND = "noisy_background"


class Brightness(Category):
    DULL = "dull"
    BRIGHT = "bright"


class Fade(Category):
    IN = "in"
    OUT = "out"


VOCABULARY = {
    "loudness": Loudness,
    "pitch": Pitch,
    "reverb": Reverb,
    "noise": Noise,
    "brightness": Brightness,
    "fade": Fade,
}


def duration_label(seconds: float) -> int:
    """Whole seconds, rounding half up."""
    return int(math.floor(seconds + 0.5))


def format_duration(seconds: float) -> str:
    return f"{duration_label(seconds)} seconds"


@dataclass(frozen=True)
class DescriptorSet:
    """Measured values and category labels for one clip."""
    duration_s: float
    loudness_lkfs: Optional[float] = None
    loudness_cat: Optional[Loudness] = None
    pitch_octave: Optional[float] = None
    pitch_cat: Optional[Pitch] = None
    reverb_cat: Optional[Reverb] = None
    rt60_s: Optional[float] = None
    snr_db: Optional[float] = None
    noise_cat: Optional[Noise] = None
    brightness_centroid: Optional[float] = None
    brightness_cat: Optional[Brightness] = None
    fade_cat: Optional[Fade] = None

    def category(self, key: str) -> Optional[str]:
        """Caption surface form of one descriptor, None when absent."""
        if key == "duration":
            return format_duration(self.duration_s)
        value = getattr(self, f"{key}_cat")
        return None if value is None else value.surface

    def categories(self) -> List[Tuple[str, str]]:
        """Present descriptors in presentation order."""
        out = []
        for key in DESCRIPTOR_KEYS:
            value = self.category(key)
            if value is not None:
                out.append((key, value))
        return out

    def to_dict(self) -> Dict[str, object]:
        def num(value: Optional[float]) -> Optional[float]:
            return None if value is None else round(float(value), 6)

        def cat(value: Optional[Category]) -> Optional[str]:
            return None if value is None else value.value

        return {
            "loudness": cat(self.loudness_cat),
            "pitch": cat(self.pitch_cat),
            "reverb": cat(self.reverb_cat),
            "noise": cat(self.noise_cat),
            "brightness": cat(self.brightness_cat),
            "fade": cat(self.fade_cat),
            "duration": format_duration(self.duration_s),
            "loudness_value": num(self.loudness_lkfs),
            "pitch_value": num(self.pitch_octave),
            "reverb_value": num(self.rt60_s),
            "noise_value": num(self.snr_db),
            "brightness_value": num(self.brightness_centroid),
            "duration_value": num(self.duration_s),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> "DescriptorSet":
        def cat(key: str):
            value = data.get(key)
            return None if value is None else VOCABULARY[key](value)

        return cls(
            duration_s=float(data["duration_value"]),
            loudness_lkfs=data.get("loudness_value"),
            loudness_cat=cat("loudness"),
            pitch_octave=data.get("pitch_value"),
            pitch_cat=cat("pitch"),
            reverb_cat=cat("reverb"),
            rt60_s=data.get("reverb_value"),
            snr_db=data.get("noise_value"),
            noise_cat=cat("noise"),
            brightness_centroid=data.get("brightness_value"),
            brightness_cat=cat("brightness"),
            fade_cat=cat("fade"),
        )


@dataclass(frozen=True)
class PitchEstimate:
    octave: float
    f0_hz: float
    voiced_fraction: float


# === LOUDNESS ===

def measure_loudness_lkfs(buf: AudioBuffer, cfg: ThresholdConfig = DEFAULT_THRESHOLDS) -> float:
    """Integrated, gated BS.1770-4 loudness in LKFS."""
    block = cfg.loudness_block_s
    if buf.duration < block:
        raise too_short_error("loudness", block, buf.duration)

    meter = pyloudnorm.Meter(buf.sample_rate, block_size=block)
    with np.errstate(divide="ignore", invalid="ignore"):
        lkfs = meter.integrated_loudness(buf.samples)
    if not np.isfinite(lkfs) or lkfs < cfg.loudness_floor:
        raise AppError("every block is below the absolute gate", ErrorType.BELOW_GATE,
                       ErrorContext(operation="loudness"))
    return float(lkfs)


def classify_loudness(lkfs: float, cfg: ThresholdConfig = DEFAULT_THRESHOLDS) -> Optional[Loudness]:
    if lkfs >= cfg.loudness_very_loud_min:
        return Loudness.VERY_LOUD
    if cfg.loudness_loud_min <= lkfs < cfg.loudness_very_loud_min:
        return Loudness.LOUD
    if cfg.loudness_soft_min <= lkfs < cfg.loudness_soft_max:
        return Loudness.SOFT
    if cfg.loudness_floor <= lkfs < cfg.loudness_soft_min:
        return Loudness.VERY_SOFT
    return None


# === PITCH ===

def _yin_cmnd(frames: np.ndarray, window: int, tau_max: int) -> np.ndarray:
    """Cumulative mean normalized difference for every frame, lags 0..tau_max."""
    n_fft = 1 << int(np.ceil(np.log2(frames.shape[1] + window)))
    head = np.fft.rfft(frames[:, :window], n_fft, axis=1)
    full = np.fft.rfft(frames, n_fft, axis=1)
    cross = np.fft.irfft(np.conj(head) * full, n_fft, axis=1)[:, :tau_max + 1]

    energy = np.concatenate([np.zeros((frames.shape[0], 1)), np.cumsum(frames ** 2, axis=1)], axis=1)
    lags = np.arange(tau_max + 1)
    shifted = energy[:, lags + window] - energy[:, lags]
    diff = energy[:, [window]] + shifted - 2.0 * cross
    diff = np.maximum(diff, 0.0)

    running = np.cumsum(diff[:, 1:], axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        cmnd = diff[:, 1:] * lags[1:] / running
    cmnd = np.where(np.isfinite(cmnd), cmnd, 1.0)
    return np.concatenate([np.ones((frames.shape[0], 1)), cmnd], axis=1)


def _pick_period(cmnd: np.ndarray, tau_min: int, tau_max: int, threshold: float) -> Optional[float]:
    below = np.flatnonzero(cmnd[tau_min:tau_max + 1] < threshold)
    if below.size == 0:
        return None
    tau = tau_min + int(below[0])
    while tau + 1 <= tau_max and cmnd[tau + 1] < cmnd[tau]:
        tau += 1
    if 0 < tau < len(cmnd) - 1:
        a, b, c = cmnd[tau - 1], cmnd[tau], cmnd[tau + 1]
        denom = a - 2.0 * b + c
        if denom > 0:
            return tau + 0.5 * (a - c) / denom
    return float(tau)


def estimate_pitch_octave(buf: AudioBuffer, cfg: ThresholdConfig = DEFAULT_THRESHOLDS) -> PitchEstimate:
    """Median voiced YIN f0, expressed in octaves above the reference pitch."""
    if buf.duration < cfg.pitch_min_duration_s:
        raise too_short_error("pitch", cfg.pitch_min_duration_s, buf.duration)

    sr = buf.sample_rate
    x = buf.samples
    peak = buf.peak
    if cfg.pitch_normalize and peak > 0:
        x = x / peak

    window = max(1, int(round(cfg.yin_frame_s * sr)))
    hop = max(1, int(round(cfg.yin_hop_s * sr)))
    tau_min = max(1, int(math.floor(sr / cfg.yin_fmax)))
    tau_max = int(math.ceil(sr / cfg.yin_fmin))
    span = window + tau_max
    if len(x) < span:
        x = np.pad(x, (0, span - len(x)))

    frames = sliding_window_view(x, span)[::hop]
    cmnd = _yin_cmnd(np.ascontiguousarray(frames), window, tau_max)

    f0s = []
    for row in cmnd:
        period = _pick_period(row, tau_min, tau_max, cfg.yin_threshold)
        if period is None or period <= 0:
            continue
        f0 = sr / period
        if cfg.yin_fmin <= f0 <= cfg.yin_fmax:
            f0s.append(f0)

    voiced_fraction = len(f0s) / len(frames)
    if voiced_fraction < cfg.min_voiced_fraction:
        raise AppError(f"only {voiced_fraction:.0%} of frames are voiced", ErrorType.UNVOICED,
                       ErrorContext(operation="pitch", details={"voiced_fraction": voiced_fraction}))

    f0 = float(np.median(f0s))
    return PitchEstimate(math.log2(f0 / cfg.pitch_reference_hz), f0, voiced_fraction)


def classify_pitch(octave: float, cfg: ThresholdConfig = DEFAULT_THRESHOLDS) -> Optional[Pitch]:
    if octave < cfg.pitch_low_max:
        return Pitch.LOW
    if octave > cfg.pitch_high_min:
        return Pitch.HIGH
    return None


# === NOISE ===

def estimate_snr(mel: MelSpectrogram, percentile: float = DEFAULT_THRESHOLDS.snr_percentile,
                 floor: float = DEFAULT_THRESHOLDS.snr_power_floor,
                 min_frames: int = DEFAULT_THRESHOLDS.snr_min_frames) -> float:
    """Mean level of the loudest frames minus mean level of the softest, in dB."""
    n = mel.n_frames
    if n < min_frames:
        raise too_short_error("snr", min_frames, n, unit=" frames")
    ensure(0.0 < percentile <= 0.5, f"percentile must be in (0, 0.5], got {percentile}",
           ErrorType.INVALID_PARAMETER)
    if not np.any(mel.energies > 0):
        raise AppError("no signal energy in any frame", ErrorType.BELOW_GATE, ErrorContext(operation="snr"))

    # floor relative to the loudest bin
    energies = mel.energies / mel.energies.max()
    levels = np.sort(10.0 * np.log10(energies.mean(axis=1) + floor))
    count = max(1, int(math.ceil(round(percentile * n, 9))))
    snr = float(levels[-count:].mean() - levels[:count].mean())
    return max(snr, 0.0)


def classify_noise(snr: float, cfg: ThresholdConfig = DEFAULT_THRESHOLDS) -> Optional[Noise]:
    if snr >= cfg.noise_silent_min:
        return Noise.SILENT_BACKGROUND
    if snr <= cfg.noise_noisy_max:
        return Noise.NOISY_BACKGROUND
    return None


# === BRIGHTNESS ===

def classify_brightness(centroid: float, cfg: ThresholdConfig = DEFAULT_THRESHOLDS) -> Optional[Brightness]:
    if centroid < cfg.brightness_dull_max:
        return Brightness.DULL
    if centroid > cfg.brightness_bright_min:
        return Brightness.BRIGHT
    return None


# === REVERB ===

def _no_decay(reason: str) -> AppError:
    return AppError(f"no measurable decay: {reason}", ErrorType.NO_DECAY, ErrorContext(operation="rt60"))


def estimate_rt60(buf: AudioBuffer, cfg: ThresholdConfig = DEFAULT_THRESHOLDS) -> float:
    """Schroeder-integrated decay after the main energy peak, extrapolated to -60 dB."""
    x = buf.samples if buf.is_mono else buf.samples.mean(axis=1)
    power = x ** 2
    if power.size == 0 or not np.any(power > 0):
        raise _no_decay("silent signal")
    peak = int(np.argmax(power))
    if peak >= len(power) - 1:
        raise _no_decay("energy peaks at the final sample")

    tail = power[peak:]
    edc = np.cumsum(tail[::-1])[::-1]
    with np.errstate(divide="ignore"):
        edc_db = 10.0 * np.log10(edc / edc[0])

    start_db, end_db = cfg.rt60_fit_start_db, cfg.rt60_fit_end_db
    past_start = np.flatnonzero(edc_db <= start_db)
    past_end = np.flatnonzero(edc_db <= end_db)
    if past_end.size == 0:
        raise _no_decay(f"energy never falls {-end_db:g} dB below the peak")
    i_start, i_end = int(past_start[0]), int(past_end[0])
    if i_end > RT60_MAX_FIT_END_FRACTION * len(edc):
        raise _no_decay("decay only reached at the end of the signal")

    sr = buf.sample_rate
    if i_end - i_start < 3:
        # decay faster than the sample grid can resolve
        return max(0.0, (60.0 / (start_db - end_db)) * (i_end - i_start) / sr)

    t = np.arange(i_start, i_end + 1) / sr
    fit = linregress(t, edc_db[i_start:i_end + 1])
    if not fit.slope < 0:
        raise _no_decay("energy does not decrease")
    if fit.rvalue ** 2 < cfg.rt60_min_r2:
        raise _no_decay(f"decay fit R^2 {fit.rvalue ** 2:.2f} below {cfg.rt60_min_r2:g}")
    return float(-60.0 / fit.slope)


# === COMPOSITION ===

def _attempt(name: str, func: Callable[[], V]) -> Optional[V]:
    try:
        return func()
    except AppError as e:
        if not e.is_undefined_measurement:
            raise
        logger.debug("%s undefined: %s", name, e)
        return None


def analyze(buf: AudioBuffer, cfg: ThresholdConfig = DEFAULT_THRESHOLDS,
            applied: Optional["AugmentationPlan"] = None) -> DescriptorSet:
    """Measure every descriptor; reverb and fade labels come from the applied plan."""
    ensure(len(buf) > 0, "cannot analyze empty audio")
    if not buf.is_mono or buf.sample_rate != cfg.canonical_rate:
        logger.debug("Canonicalizing %d Hz / %d ch input before analysis", buf.sample_rate, buf.channels)
        buf = canonicalize(buf, cfg.canonical_rate)

    lkfs = _attempt("loudness", lambda: measure_loudness_lkfs(buf, cfg))
    pitch = _attempt("pitch", lambda: estimate_pitch_octave(buf, cfg))
    mel = _attempt("mel", lambda: mel_spectrogram(buf, cfg.frame_size, cfg.hop, cfg.n_mels, cfg.fmin, cfg.fmax))
    snr = centroid = None
    if mel is not None:
        snr = _attempt("noise", lambda: estimate_snr(mel, cfg.snr_percentile, cfg.snr_power_floor,
                                                     cfg.snr_min_frames))
        centroid = _attempt("brightness", lambda: spectral_centroid_mel(mel))
    rt60 = _attempt("rt60", lambda: estimate_rt60(buf, cfg))

    return DescriptorSet(
        duration_s=buf.duration,
        loudness_lkfs=lkfs,
        loudness_cat=None if lkfs is None else classify_loudness(lkfs, cfg),
        pitch_octave=None if pitch is None else pitch.octave,
        pitch_cat=None if pitch is None else classify_pitch(pitch.octave, cfg),
        reverb_cat=None if applied is None else applied.reverb,
        rt60_s=rt60,
        snr_db=snr,
        noise_cat=None if snr is None else classify_noise(snr, cfg),
        brightness_centroid=centroid,
        brightness_cat=None if centroid is None else classify_brightness(centroid, cfg),
        fade_cat=None if applied is None else applied.fade,
    )


def with_plan_labels(ds: DescriptorSet, applied: Optional["AugmentationPlan"], duration_s: float) -> DescriptorSet:
    """Copy plan labels and the final duration onto a set measured elsewhere."""
    return replace(ds,
                   reverb_cat=None if applied is None else applied.reverb,
                   fade_cat=None if applied is None else applied.fade,
                   duration_s=duration_s)
