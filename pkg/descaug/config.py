"""
Configuration models.

All tunable constants live here, one pydantic model per concern. Defaults are
the category boundaries and analysis settings the toolkit ships with; a
pipeline run is fully described by one PipelineConfig JSON document.
"""

import hashlib
import json
import os
from pathlib import Path
from typing import Dict, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import AppError, ErrorContext, ErrorType

WORKERS_ENV = "DESCAUG_WORKERS"
SEED_ENV = "DESCAUG_SEED"

DESCRIPTOR_KEYS = ("loudness", "pitch", "reverb", "noise", "brightness", "fade", "duration")
REVERB_CATEGORIES = ("dry", "slightly_wet", "wet", "very_wet")

# Fields that describe where and how fast a run happens, not what it produces.
RUN_ONLY_FIELDS = frozenset({"workers", "output_dir"})


def _env_int(name: str, default: int) -> int:
    raw = os.environ.get(name)
    if raw is None or not raw.strip():
        return default
    try:
        return int(raw)
    except ValueError:
        raise AppError(f"{name} must be an integer, got {raw!r}", ErrorType.CONFIG_ERROR)


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class ThresholdConfig(_Frozen):
    """Category boundaries and analysis parameters for every descriptor."""

    # loudness, LKFS: very_soft [floor, soft_min), soft [soft_min, soft_max),
    # gap [soft_max, loud_min), loud [loud_min, very_loud_min), very_loud >= very_loud_min
    loudness_floor: float = -70.0
    loudness_soft_min: float = -55.0
    loudness_soft_max: float = -40.0
    loudness_loud_min: float = -30.0
    loudness_very_loud_min: float = -15.0
    loudness_block_s: float = 0.4

    # pitch, octaves above pitch_reference_hz (C0)
    pitch_low_max: float = 1.5
    pitch_high_min: float = 3.5
    pitch_reference_hz: float = 16.3516
    pitch_min_duration_s: float = 0.1
    pitch_normalize: bool = True
    yin_threshold: float = 0.15
    yin_fmin: float = 30.0
    yin_fmax: float = 2000.0
    yin_frame_s: float = 0.025
    yin_hop_s: float = 0.010
    min_voiced_fraction: float = 0.2

    # noise, dB gap between loudest and softest frames
    noise_noisy_max: float = 2.0
    noise_silent_min: float = 6.0
    snr_percentile: float = 0.1
    snr_power_floor: float = 1e-10
    snr_min_frames: int = 10

    # brightness, mel-bin index of the spectral centroid
    brightness_dull_max: float = 45.0
    brightness_bright_min: float = 65.0

    # shared spectral analysis
    canonical_rate: int = 48000
    frame_size: int = 2048
    hop: int = 512
    n_mels: int = 128
    fmin: float = 20.0
    fmax: float = 24000.0

    # reverb decay fit
    rt60_fit_start_db: float = -5.0
    rt60_fit_end_db: float = -25.0
    rt60_min_r2: float = 0.8

    # measure descriptors on the augmented signal rather than the source
    measure_after_augmentation: bool = True

    @model_validator(mode="after")
    def _check_order(self) -> "ThresholdConfig":
        if not (self.loudness_floor < self.loudness_soft_min < self.loudness_soft_max
                and self.loudness_loud_min < self.loudness_very_loud_min):
            raise ValueError("loudness boundaries must be strictly increasing")
        if self.loudness_soft_max > self.loudness_loud_min:
            raise ValueError("loudness gap must have non-negative width")
        if not self.pitch_low_max <= self.pitch_high_min:
            raise ValueError("pitch_low_max must not exceed pitch_high_min")
        if not self.noise_noisy_max <= self.noise_silent_min:
            raise ValueError("noise_noisy_max must not exceed noise_silent_min")
        if not self.brightness_dull_max <= self.brightness_bright_min:
            raise ValueError("brightness_dull_max must not exceed brightness_bright_min")
        if not 0.0 < self.snr_percentile <= 0.5:
            raise ValueError("snr_percentile must be in (0, 0.5]")
        if not 0.0 < self.fmin < self.fmax:
            raise ValueError("fmin must be positive and below fmax")
        if self.fmax > self.canonical_rate / 2:
            raise ValueError("fmax must not exceed the canonical Nyquist frequency")
        if self.frame_size <= 0 or self.frame_size & (self.frame_size - 1):
            raise ValueError("frame_size must be a power of two")
        if not 0 < self.hop <= self.frame_size:
            raise ValueError("hop must be in (0, frame_size]")
        if self.n_mels < 2:
            raise ValueError("n_mels must be at least 2")
        if not 0.0 < self.yin_fmin < self.yin_fmax:
            raise ValueError("yin_fmin must be positive and below yin_fmax")
        if not self.rt60_fit_end_db < self.rt60_fit_start_db < 0:
            raise ValueError("rt60 fit range must satisfy end < start < 0 dB")
        return self


class ReverbParams(_Frozen):
    """Settings for one reverb category."""
    rt60: float = Field(ge=0.0)
    wet_mix: float = Field(ge=0.0, le=1.0)
    pre_delay_ms: float = Field(default=10.0, ge=0.0)


def _default_reverb_map() -> Dict[str, ReverbParams]:
    return {
        "slightly_wet": ReverbParams(rt60=0.3, wet_mix=0.2),
        "wet": ReverbParams(rt60=0.8, wet_mix=0.4),
        "very_wet": ReverbParams(rt60=1.8, wet_mix=0.6),
    }


def _default_include_probs() -> Dict[str, float]:
    probs = {key: 1.0 for key in DESCRIPTOR_KEYS}
    probs["duration"] = 0.5
    return probs


class AugmentConfig(_Frozen):
    """Probabilities and effect settings for per-entry augmentation plans."""
    reverb_prob: float = Field(default=0.3, ge=0.0, le=1.0)
    fade_prob: float = Field(default=0.3, ge=0.0, le=1.0)
    include_probs: Dict[str, float] = Field(default_factory=_default_include_probs)
    reverb_map: Dict[str, ReverbParams] = Field(default_factory=_default_reverb_map)
    fade_fraction: float = Field(default=0.25, gt=0.0, le=0.5)
    fade_max_s: float = Field(default=2.0, gt=0.0)
    # reverb tail kept after the input ends, as a multiple of the category rt60
    tail_keep: float = Field(default=1.0, ge=0.0)

    @field_validator("include_probs")
    @classmethod
    def _check_include(cls, value: Dict[str, float]) -> Dict[str, float]:
        unknown = set(value) - set(DESCRIPTOR_KEYS)
        if unknown:
            raise ValueError(f"unknown descriptors in include_probs: {sorted(unknown)}")
        for key, prob in value.items():
            if not 0.0 <= prob <= 1.0:
                raise ValueError(f"include_probs[{key}] must be in [0, 1]")
        merged = _default_include_probs()
        merged.update(value)
        return merged

    @field_validator("reverb_map")
    @classmethod
    def _check_reverb_map(cls, value: Dict[str, ReverbParams]) -> Dict[str, ReverbParams]:
        wet = [c for c in REVERB_CATEGORIES if c != "dry"]
        missing = set(wet) - set(value)
        unknown = set(value) - set(wet)
        if missing or unknown:
            raise ValueError(f"reverb_map must define exactly {wet}")
        for name, params in value.items():
            if params.rt60 <= 0:
                raise ValueError(f"reverb_map[{name}].rt60 must be positive")
        return value

    @classmethod
    def uniform(cls, prob: float, **overrides) -> "AugmentConfig":
        """Every effect and every descriptor inclusion at the same probability."""
        fields = {"reverb_prob": prob, "fade_prob": prob,
                  "include_probs": {key: prob for key in DESCRIPTOR_KEYS}}
        fields.update(overrides)
        return cls(**fields)


class PipelineConfig(_Frozen):
    """Everything a batch run depends on."""
    global_seed: int = Field(default_factory=lambda: _env_int(SEED_ENV, 0), ge=0, lt=2**64)
    augment: AugmentConfig = Field(default_factory=AugmentConfig)
    thresholds: ThresholdConfig = Field(default_factory=ThresholdConfig)
    workers: int = Field(default_factory=lambda: _env_int(WORKERS_ENV, 1), ge=1)
    output_dir: Optional[str] = None

    def canonical_json(self) -> str:
        """Serialization of the result-affecting fields with sorted keys."""
        data = self.model_dump(mode="json", exclude=set(RUN_ONLY_FIELDS))
        return json.dumps(data, sort_keys=True, separators=(",", ":"))


def config_hash(cfg: PipelineConfig) -> str:
    """64-bit hex digest binding outputs to the settings that produced them."""
    return hashlib.blake2b(cfg.canonical_json().encode("utf-8"), digest_size=8).hexdigest()


def load_config(path: Path, **overrides) -> PipelineConfig:
    """Read a PipelineConfig JSON document; overrides that are None are ignored."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8")) if path.stat().st_size else {}
    except OSError as e:
        raise AppError(f"Cannot read config: {e}", ErrorType.CONFIG_ERROR,
                       ErrorContext(file_path=str(path), operation="load_config"), e)
    except json.JSONDecodeError as e:
        raise AppError(f"Config is not valid JSON: {e}", ErrorType.CONFIG_ERROR,
                       ErrorContext(file_path=str(path), operation="load_config"), e)
    if not isinstance(data, dict):
        raise AppError("Config document must be a JSON object", ErrorType.CONFIG_ERROR,
                       ErrorContext(file_path=str(path), operation="load_config"))
    data.update({k: v for k, v in overrides.items() if v is not None})
    return build_config(data, source=str(path))


def build_config(data: dict, source: Optional[str] = None) -> PipelineConfig:
    try:
        return PipelineConfig.model_validate(data)
    except ValidationError as e:
        raise AppError(f"Invalid configuration: {e}", ErrorType.CONFIG_ERROR,
                       ErrorContext(file_path=source, operation="load_config"), e)
