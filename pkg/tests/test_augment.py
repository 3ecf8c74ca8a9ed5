#!/usr/bin/env python3
"""
Tests for augmentation planning, reverb and fades.
"""

import numpy as np
import pytest

from descaug.audio_io import AudioBuffer
from descaug.augment import (
    AugmentationPlan,
    apply_fade,
    apply_plan,
    apply_reverb,
    entry_seed,
    fade_length,
    plan_augmentation,
    synthesize_impulse_response,
)
from descaug.config import DESCRIPTOR_KEYS, AugmentConfig
from descaug.descriptors import Fade, Reverb, estimate_rt60
from descaug.errors import AppError, ErrorType


class TestImpulseResponse:
    def test_length_and_energy(self):
        ir = synthesize_impulse_response(0.5, 48000, seed=1)
        assert len(ir) == 36000
        assert np.sum(ir.samples ** 2) == pytest.approx(1.0)

    def test_measured_rt60(self):
        ir = synthesize_impulse_response(0.5, 48000, seed=1)
        assert 0.45 <= estimate_rt60(ir) <= 0.55

    def test_deterministic(self):
        a = synthesize_impulse_response(0.8, 48000, seed=42).samples
        b = synthesize_impulse_response(0.8, 48000, seed=42).samples
        assert np.array_equal(a, b)

    @pytest.mark.parametrize("rt60", [0.0, -1.0])
    def test_rejects_non_positive_rt60(self, rt60):
        with pytest.raises(AppError) as exc:
            synthesize_impulse_response(rt60, 48000, seed=0)
        assert exc.value.error_type == ErrorType.INVALID_PARAMETER


class TestReverb:
    """Test convolution reverb."""

    def test_dry_is_identity(self, burst):
        buf = burst(seed=0)
        assert apply_reverb(buf, Reverb.DRY, seed=1) is buf

    @pytest.mark.parametrize("cat", [Reverb.SLIGHTLY_WET, Reverb.WET, Reverb.VERY_WET])
    def test_peak_and_length(self, burst, cat):
        buf = burst(seed=3)
        out = apply_reverb(buf, cat, seed=9)
        rt60 = AugmentConfig().reverb_map[cat.value].rt60
        assert out.peak == pytest.approx(buf.peak, abs=1e-3)
        assert len(out) == len(buf) + int(round(rt60 * 48000))

    def test_tail_keep(self, burst):
        buf = burst(seed=3)
        out = apply_reverb(buf, Reverb.WET, seed=9, tail_keep=0.0)
        assert len(out) == len(buf)

    def test_very_wet_longer_than_slightly_wet(self):
        x = np.zeros(48000)
        x[4800] = 1.0
        impulse = AudioBuffer(x, 48000)
        slight = estimate_rt60(apply_reverb(impulse, Reverb.SLIGHTLY_WET, seed=5))
        very = estimate_rt60(apply_reverb(impulse, Reverb.VERY_WET, seed=5))
        assert very > slight

    @pytest.mark.slow
    def test_rt60_monotone_over_corpus(self, burst):
        """Mean measured RT60 rises with the reverb category across 50 percussive clips."""
        means = {}
        for cat in (Reverb.DRY, Reverb.SLIGHTLY_WET, Reverb.WET, Reverb.VERY_WET):
            values = [estimate_rt60(apply_reverb(burst(seed=s), cat, seed=1000 + s)) for s in range(50)]
            means[cat] = float(np.mean(values))
        assert means[Reverb.DRY] < 0.15
        assert means[Reverb.DRY] < means[Reverb.SLIGHTLY_WET] < means[Reverb.WET] < means[Reverb.VERY_WET]


class TestFade:
    """Test linear fades."""

    def test_fade_out_ends_at_zero(self, noise):
        buf = noise(seconds=1.0, amp=0.5, seed=2)
        out = apply_fade(buf, Fade.OUT, 0.25)
        assert out.samples[-1] == 0.0
        assert np.sum(out.samples ** 2) <= np.sum(buf.samples ** 2)
        np.testing.assert_array_equal(out.samples[:36000], buf.samples[:36000])

    def test_fade_in_starts_at_zero(self):
        buf = AudioBuffer(np.ones(48000), 48000)
        out = apply_fade(buf, Fade.IN, 0.5)
        ramp = 24000
        assert out.samples[0] == 0.0
        assert out.samples[ramp // 2] == pytest.approx(0.5, abs=1e-3)
        np.testing.assert_array_equal(out.samples[ramp:], buf.samples[ramp:])

    def test_fade_clamped_to_half_clip(self):
        buf = AudioBuffer(np.ones(1000), 1000)
        out = apply_fade(buf, Fade.OUT, 5.0)
        assert np.all(out.samples[:500] == 1.0)
        np.testing.assert_allclose(out.samples[500:], np.linspace(1.0, 0.0, 501)[1:])
        assert out.samples[-1] == 0.0

    @pytest.mark.parametrize("samples,faded_out,faded_in", [
        ([1.0, 1.0], [1.0, 0.0], [0.0, 1.0]),
        ([1.0, 1.0, 1.0], [1.0, 1.0, 0.0], [0.0, 1.0, 1.0]),
        ([0.5], [0.0], [0.0]),
    ])
    def test_tiny_clips_reach_zero(self, samples, faded_out, faded_in):
        buf = AudioBuffer(np.array(samples), 48000)
        np.testing.assert_array_equal(apply_fade(buf, Fade.OUT, 1.0).samples, faded_out)
        np.testing.assert_array_equal(apply_fade(buf, Fade.IN, 1.0).samples, faded_in)

    def test_default_length(self):
        assert fade_length(2.0) == pytest.approx(0.5)
        assert fade_length(60.0) == 2.0

    def test_rejects_empty(self):
        with pytest.raises(AppError):
            apply_fade(AudioBuffer(np.zeros(0), 48000), Fade.IN, 1.0)


class TestPlanning:
    """Test seeded augmentation plans."""

    def test_all_zero(self):
        plan = plan_augmentation("clip-1", 0, AugmentConfig.uniform(0.0))
        assert plan.reverb is None and plan.fade is None
        assert not any(plan.include_flags.values())
        assert not plan.include_duration
        assert not plan.modifies_audio

    def test_all_one(self):
        plan = plan_augmentation("clip-1", 0, AugmentConfig.uniform(1.0))
        assert plan.reverb is not None and plan.fade is not None
        assert all(plan.include_flags[key] for key in DESCRIPTOR_KEYS)
        assert plan.include_duration

    def test_deterministic(self):
        cfg = AugmentConfig()
        assert plan_augmentation("a", 7, cfg) == plan_augmentation("a", 7, cfg)
        assert entry_seed("a", 7) != entry_seed("b", 7)
        assert entry_seed("a", 7) != entry_seed("a", 8)

    @pytest.mark.parametrize("global_seed", [0, 1, 2])
    def test_reverb_fire_rate(self, global_seed):
        cfg = AugmentConfig(reverb_prob=0.3)
        fired = sum(plan_augmentation(f"e{i}", global_seed, cfg).reverb is not None for i in range(10000))
        assert fired / 10000 == pytest.approx(0.3, abs=0.02)

    def test_categories_cover_vocabulary(self):
        cfg = AugmentConfig.uniform(1.0)
        seen_reverb = {plan_augmentation(f"e{i}", 0, cfg).reverb for i in range(200)}
        seen_fade = {plan_augmentation(f"e{i}", 0, cfg).fade for i in range(200)}
        assert seen_reverb == set(Reverb)
        assert seen_fade == set(Fade)

    def test_round_trip_dict(self):
        plan = plan_augmentation("x", 3, AugmentConfig.uniform(1.0))
        assert AugmentationPlan.from_dict(plan.to_dict()) == plan


class TestApplyPlan:
    def test_no_effects_leaves_audio(self, burst):
        buf = burst(seed=0)
        out, modified = apply_plan(buf, AugmentationPlan(seed=1))
        assert out is buf and not modified

    def test_dry_label_does_not_modify(self, burst):
        buf = burst(seed=0)
        out, modified = apply_plan(buf, AugmentationPlan(seed=1, reverb=Reverb.DRY))
        assert out is buf and not modified

    def test_reverb_then_fade_is_deterministic(self, burst):
        plan = AugmentationPlan(seed=5, reverb=Reverb.WET, fade=Fade.OUT)
        a, modified = apply_plan(burst(seed=0), plan)
        b, _ = apply_plan(burst(seed=0), plan)
        assert modified
        assert np.array_equal(a.samples, b.samples)
        assert a.samples[-1] == 0.0


pytestmark = [pytest.mark.unit, pytest.mark.dsp]
