"""
Reverb and fade augmentation, and the seeded per-entry plan that decides
which of them run and which descriptors end up in the caption.
"""

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Tuple

import numpy as np
from scipy.signal import fftconvolve

from .audio_io import AudioBuffer
from .config import DESCRIPTOR_KEYS, AugmentConfig, ReverbParams
from .descriptors import Fade, Reverb
from .errors import ErrorType, ensure

logger = logging.getLogger(__name__)

DEFAULT_AUGMENT = AugmentConfig()

# Impulse responses run until the envelope is 90 dB down.
IR_LENGTH_RT60S = 1.5

REVERB_ORDER = (Reverb.DRY, Reverb.SLIGHTLY_WET, Reverb.WET, Reverb.VERY_WET)
FADE_ORDER = (Fade.IN, Fade.OUT)


def entry_seed(entry_id: str, global_seed: int) -> int:
    """Stable 64-bit seed for one entry; independent of every other entry."""
    digest = hashlib.blake2b(f"{global_seed}:{entry_id}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def _sub_seed(seed: int, purpose: str) -> int:
    digest = hashlib.blake2b(f"{seed}:{purpose}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class AugmentationPlan:
    """Seeded decisions for one entry."""
    seed: int
    reverb: Optional[Reverb] = None
    fade: Optional[Fade] = None
    include_flags: Dict[str, bool] = field(default_factory=dict)

    @property
    def include_duration(self) -> bool:
        return bool(self.include_flags.get("duration", False))

    @property
    def modifies_audio(self) -> bool:
        return (self.reverb is not None and self.reverb != Reverb.DRY) or self.fade is not None

    def includes(self, key: str) -> bool:
        return bool(self.include_flags.get(key, False))

    def to_dict(self) -> Dict[str, object]:
        return {
            "reverb": None if self.reverb is None else self.reverb.value,
            "fade": None if self.fade is None else self.fade.value,
            "include_duration": self.include_duration,
            "include_flags": {key: self.includes(key) for key in DESCRIPTOR_KEYS},
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, object]) -> "AugmentationPlan":
        reverb = data.get("reverb")
        fade = data.get("fade")
        return cls(
            seed=int(data["seed"]),
            reverb=None if reverb is None else Reverb(reverb),
            fade=None if fade is None else Fade(fade),
            include_flags={key: bool(v) for key, v in dict(data.get("include_flags") or {}).items()},
        )


def plan_augmentation(entry_id: str, global_seed: int, probs: AugmentConfig = DEFAULT_AUGMENT) -> AugmentationPlan:
    """Draw an entry's plan from a counter-based generator keyed on (global_seed, entry_id).

    Draw order is fixed: reverb fire, reverb category, fade fire, fade kind,
    then one inclusion draw per descriptor in presentation order. Every draw
    happens whether or not its effect fires.
    """
    seed = entry_seed(entry_id, global_seed)
    rng = _rng(seed)

    reverb_fires = rng.random() < probs.reverb_prob
    reverb = REVERB_ORDER[int(rng.integers(len(REVERB_ORDER)))]
    fade_fires = rng.random() < probs.fade_prob
    fade = FADE_ORDER[int(rng.integers(len(FADE_ORDER)))]
    flags = {key: bool(rng.random() < probs.include_probs[key]) for key in DESCRIPTOR_KEYS}

    return AugmentationPlan(
        seed=seed,
        reverb=reverb if reverb_fires else None,
        fade=fade if fade_fires else None,
        include_flags=flags,
    )


def synthesize_impulse_response(rt60: float, sample_rate: int, seed: int) -> AudioBuffer:
    """Gaussian noise under an exponential envelope that falls 60 dB in rt60 seconds; unit energy."""
    ensure(rt60 > 0, f"rt60 must be positive, got {rt60}", ErrorType.INVALID_PARAMETER)
    ensure(sample_rate > 0, f"sample_rate must be positive, got {sample_rate}", ErrorType.INVALID_PARAMETER)

    length = max(1, int(round(IR_LENGTH_RT60S * rt60 * sample_rate)))
    n = np.arange(length, dtype=np.float64)
    envelope = np.power(10.0, -3.0 * n / (rt60 * sample_rate))
    h = _rng(seed).standard_normal(length) * envelope
    h /= np.sqrt(np.sum(h ** 2))
    return AudioBuffer(h, sample_rate)


def reverb_params(cat: Reverb, reverb_map: Mapping[str, ReverbParams]) -> ReverbParams:
    ensure(cat.value in reverb_map, f"no reverb settings for {cat.value!r}", ErrorType.INVALID_PARAMETER)
    return reverb_map[cat.value]


def apply_reverb(buf: AudioBuffer, cat: Reverb, seed: int,
                 reverb_map: Optional[Mapping[str, ReverbParams]] = None,
                 tail_keep: float = DEFAULT_AUGMENT.tail_keep) -> AudioBuffer:
    """Blend the input with its convolution by a synthetic IR; dry is a no-op."""
    ensure(len(buf) > 0, "cannot apply reverb to empty audio")
    ensure(buf.is_mono, "apply_reverb expects mono audio")
    if cat == Reverb.DRY:
        return buf

    params = reverb_params(cat, reverb_map or DEFAULT_AUGMENT.reverb_map)
    sr = buf.sample_rate
    ir = synthesize_impulse_response(params.rt60, sr, _sub_seed(seed, "ir")).samples
    delay = int(round(params.pre_delay_ms * sr / 1000.0))
    if delay:
        ir = np.concatenate([np.zeros(delay), ir])

    x = buf.samples
    wet = fftconvolve(x, ir)
    dry = np.zeros_like(wet)
    dry[:len(x)] = x
    out = (1.0 - params.wet_mix) * dry + params.wet_mix * wet

    keep = len(x) + int(round(tail_keep * params.rt60 * sr))
    out = out[:min(keep, len(out))]

    in_peak = buf.peak
    out_peak = float(np.max(np.abs(out)))
    if out_peak > 0:
        out = out * (in_peak / out_peak)
    logger.debug("Applied %s reverb (rt60 %.2fs, wet %.2f)", cat.value, params.rt60, params.wet_mix)
    return buf.with_samples(out)


def fade_length(duration_s: float, cfg: AugmentConfig = DEFAULT_AUGMENT) -> float:
    """Default fade: a fraction of the clip, capped."""
    return min(cfg.fade_fraction * duration_s, cfg.fade_max_s)


def apply_fade(buf: AudioBuffer, kind: Fade, fade_seconds: float) -> AudioBuffer:
    """Linear ramp over min(fade_seconds, half the clip).

    The ramp reaches exactly zero at the clip boundary; samples outside it
    are copied unchanged.
    """
    ensure(len(buf) > 0, "cannot fade empty audio")
    ensure(fade_seconds > 0, f"fade_seconds must be positive, got {fade_seconds}", ErrorType.INVALID_PARAMETER)

    n = len(buf)
    ramp_len = max(1, min(int(round(fade_seconds * buf.sample_rate)), n // 2))
    out = buf.samples.copy()
    if kind == Fade.IN:
        ramp = np.linspace(0.0, 1.0, ramp_len + 1)[:-1]
        out[:ramp_len] = (out[:ramp_len].T * ramp).T
    else:
        ramp = np.linspace(1.0, 0.0, ramp_len + 1)[1:]
        out[n - ramp_len:] = (out[n - ramp_len:].T * ramp).T
    return buf.with_samples(out)


def apply_plan(buf: AudioBuffer, plan: AugmentationPlan,
               cfg: AugmentConfig = DEFAULT_AUGMENT) -> Tuple[AudioBuffer, bool]:
    """Run the plan's effects in order (reverb, then fade); report whether samples changed."""
    out = buf
    if plan.reverb is not None and plan.reverb != Reverb.DRY:
        out = apply_reverb(out, plan.reverb, plan.seed, cfg.reverb_map, cfg.tail_keep)
    if plan.fade is not None:
        out = apply_fade(out, plan.fade, fade_length(out.duration, cfg))
    return out, plan.modifies_audio
