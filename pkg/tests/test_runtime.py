"""Runtime curve and payload sampling tests."""

from __future__ import annotations

import random

import numpy as np
import pytest

from dowsim.errors import ConfigError
from dowsim.runtime import (
    DEFAULT_CURVE,
    PayloadKind,
    PayloadSpec,
    RuntimeCurve,
    mean_runtime_ms,
    runtime_for_input,
    sample_runtime,
)
from oracles import oracle_curve_ms

# Measured resize benchmark: square source image edge in px -> mean ms.
ANCHORS = ((540.0, 241.818), (1080.0, 379.044), (2160.0, 1057.188),
           (4320.0, 2950.868), (8640.0, 9885.918))


class TestCurve:
    @pytest.mark.parametrize("size,expected", list(ANCHORS))
    def test_anchor_values_exact(self, size, expected):
        assert runtime_for_input(size, DEFAULT_CURVE) == expected

    def test_phone_photo_interpolation(self):
        # 4032 px is a common phone camera edge; frozen from the oracle
        got = runtime_for_input(4032.0, DEFAULT_CURVE)
        want = oracle_curve_ms(4032.0, list(ANCHORS), 300_000.0)
        assert got == pytest.approx(want, rel=1e-9)
        assert 2656.0 < got < 2672.0
        assert 0.8 * 2950.868 < got < 2950.868

    def test_extrapolation_above_largest_anchor(self):
        got = runtime_for_input(17280.0, DEFAULT_CURVE)
        want = oracle_curve_ms(17280.0, list(ANCHORS), 300_000.0)
        assert got == pytest.approx(want, rel=1e-9)
        assert 33_000.0 < got < 33_250.0

    def test_clamped_below_smallest_anchor(self):
        assert runtime_for_input(1.0, DEFAULT_CURVE) == 241.818
        assert runtime_for_input(539.0, DEFAULT_CURVE) == 241.818

    def test_capped_at_timeout(self):
        assert runtime_for_input(1_000_000.0, DEFAULT_CURVE) == DEFAULT_CURVE.timeout_ms

    def test_monotone_over_random_sizes(self):
        rng = random.Random(0xC04E)
        sizes = sorted(rng.uniform(1.0, 50_000.0) for _ in range(10_000))
        values = [runtime_for_input(s, DEFAULT_CURVE) for s in sizes]
        for a, b in zip(values, values[1:]):
            assert b >= a

    def test_default_timeout_is_five_minutes(self):
        assert DEFAULT_CURVE.timeout_ms == 300_000.0

    def test_single_anchor_curve_is_constant(self):
        curve = RuntimeCurve(anchors=((1000.0, 500.0),), timeout_ms=10_000.0)
        assert runtime_for_input(10.0, curve) == 500.0
        assert runtime_for_input(1000.0, curve) == 500.0
        assert runtime_for_input(99_999.0, curve) == 500.0

    def test_bad_curves_rejected(self):
        with pytest.raises(ConfigError):
            RuntimeCurve(anchors=(), timeout_ms=1000.0)
        with pytest.raises(ConfigError):
            RuntimeCurve(anchors=((100.0, 10.0), (100.0, 20.0)), timeout_ms=1000.0)
        with pytest.raises(ConfigError):
            RuntimeCurve(anchors=((200.0, 10.0), (100.0, 20.0)), timeout_ms=1000.0)
        with pytest.raises(ConfigError):
            RuntimeCurve(anchors=((100.0, -1.0),), timeout_ms=1000.0)
        with pytest.raises(ConfigError):
            RuntimeCurve(anchors=((100.0, 10.0),), timeout_ms=0.0)

    def test_non_positive_size_rejected(self):
        with pytest.raises(ValueError):
            runtime_for_input(0.0, DEFAULT_CURVE)


class TestPayloads:
    def test_kind_field_pairing_enforced(self):
        PayloadSpec(kind=PayloadKind.SIZED_INPUT, size_px=4032.0)
        PayloadSpec(kind=PayloadKind.FIXED_RUNTIME, fixed_ms=30.0)
        PayloadSpec(kind=PayloadKind.INFLATING, inflation_target_ms=400_000.0)
        with pytest.raises(ConfigError):
            PayloadSpec(kind=PayloadKind.SIZED_INPUT, fixed_ms=30.0)
        with pytest.raises(ConfigError):
            PayloadSpec(kind=PayloadKind.FIXED_RUNTIME)
        with pytest.raises(ConfigError):
            PayloadSpec(kind=PayloadKind.FIXED_RUNTIME, fixed_ms=30.0, size_px=4032.0)
        with pytest.raises(ConfigError):
            PayloadSpec(kind=PayloadKind.INFLATING, inflation_target_ms=-5.0)

    def test_mean_fixed(self):
        p = PayloadSpec(kind=PayloadKind.FIXED_RUNTIME, fixed_ms=2950.0)
        assert mean_runtime_ms(p, DEFAULT_CURVE) == 2950.0

    def test_mean_sized(self):
        p = PayloadSpec(kind=PayloadKind.SIZED_INPUT, size_px=4320.0)
        assert mean_runtime_ms(p, DEFAULT_CURVE) == 2950.868

    def test_mean_inflating_capped_at_timeout(self):
        p = PayloadSpec(kind=PayloadKind.INFLATING, inflation_target_ms=400_000.0)
        assert mean_runtime_ms(p, DEFAULT_CURVE) == 300_000.0
        q = PayloadSpec(kind=PayloadKind.INFLATING, inflation_target_ms=10_000.0)
        assert mean_runtime_ms(q, DEFAULT_CURVE) == 10_000.0

    def test_fixed_mean_capped_at_timeout(self):
        p = PayloadSpec(kind=PayloadKind.FIXED_RUNTIME, fixed_ms=999_999.0)
        assert mean_runtime_ms(p, DEFAULT_CURVE) == 300_000.0


class TestSampling:
    def test_zero_jitter_is_exact(self):
        p = PayloadSpec(kind=PayloadKind.FIXED_RUNTIME, fixed_ms=2950.0)
        rng = np.random.default_rng(7)
        assert sample_runtime(p, DEFAULT_CURVE, 0.0, rng) == 2950.0

    def test_jitter_bounds(self):
        p = PayloadSpec(kind=PayloadKind.SIZED_INPUT, size_px=4320.0)
        rng = np.random.default_rng(11)
        mean = 2950.868
        for _ in range(2000):
            value = sample_runtime(p, DEFAULT_CURVE, 0.02, rng)
            assert mean * 0.98 <= value <= mean * 1.02

    def test_sample_never_exceeds_timeout(self):
        p = PayloadSpec(kind=PayloadKind.INFLATING, inflation_target_ms=299_999.0)
        rng = np.random.default_rng(3)
        for _ in range(500):
            assert sample_runtime(p, DEFAULT_CURVE, 0.5, rng) <= 300_000.0

    def test_deterministic_for_equal_seeds(self):
        p = PayloadSpec(kind=PayloadKind.FIXED_RUNTIME, fixed_ms=100.0)
        a = [sample_runtime(p, DEFAULT_CURVE, 0.1, np.random.default_rng(42)) for _ in range(1)]
        b = [sample_runtime(p, DEFAULT_CURVE, 0.1, np.random.default_rng(42)) for _ in range(1)]
        assert a == b

    def test_bad_jitter_rejected(self):
        p = PayloadSpec(kind=PayloadKind.FIXED_RUNTIME, fixed_ms=100.0)
        with pytest.raises(ConfigError):
            sample_runtime(p, DEFAULT_CURVE, -0.1, np.random.default_rng(1))
        with pytest.raises(ConfigError):
            sample_runtime(p, DEFAULT_CURVE, 1.0, np.random.default_rng(1))
