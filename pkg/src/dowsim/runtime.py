"""Function runtime model.

Maps request payloads to execution durations. Sized payloads go through a
piecewise power law (linear interpolation in log-log space) fitted to a
measured image-resize benchmark; below the smallest measurement the curve
clamps flat, above the largest it extrapolates along the final segment. The
platform timeout caps everything.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError


class PayloadKind(str, Enum):
    FIXED_RUNTIME = "fixed_runtime"
    SIZED_INPUT = "sized_input"
    INFLATING = "inflating"


@dataclass(frozen=True)
class PayloadSpec:
    """What a request asks the function to do.

    fixed_runtime pins the duration directly, sized_input carries an input
    whose size drives the duration through the curve, and inflating names a
    target duration the attacker tries to reach (timeout permitting).
    """

    kind: PayloadKind
    size_px: float | None = None
    fixed_ms: float | None = None
    inflation_target_ms: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", PayloadKind(self.kind))
        required = {
            PayloadKind.FIXED_RUNTIME: "fixed_ms",
            PayloadKind.SIZED_INPUT: "size_px",
            PayloadKind.INFLATING: "inflation_target_ms",
        }[self.kind]
        for field in ("size_px", "fixed_ms", "inflation_target_ms"):
            value = getattr(self, field)
            if field == required:
                if value is None or value < 0:
                    raise ConfigError(f"payload kind {self.kind} needs {field} >= 0")
            elif value is not None:
                raise ConfigError(f"payload kind {self.kind} does not take {field}")


@dataclass(frozen=True)
class RuntimeCurve:
    """(input size px, mean runtime ms) anchors plus the platform timeout."""

    anchors: tuple[tuple[float, float], ...]
    timeout_ms: float

    def __post_init__(self) -> None:
        if not self.anchors:
            raise ConfigError("runtime curve needs at least one anchor")
        sizes = [a[0] for a in self.anchors]
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ConfigError("curve anchor sizes must be strictly increasing")
        if sizes[0] <= 0:
            raise ConfigError("curve anchor sizes must be positive")
        if any(a[1] < 0 for a in self.anchors):
            raise ConfigError("curve anchor runtimes must be >= 0")
        if self.timeout_ms <= 0:
            raise ConfigError("timeout_ms must be positive")


# Mean runtimes measured for square source images on a 128 MB function.
DEFAULT_ANCHORS: tuple[tuple[float, float], ...] = (
    (540.0, 241.818),
    (1080.0, 379.044),
    (2160.0, 1057.188),
    (4320.0, 2950.868),
    (8640.0, 9885.918),
)

DEFAULT_TIMEOUT_MS = 300_000.0  # five minutes, the common platform ceiling

DEFAULT_CURVE = RuntimeCurve(anchors=DEFAULT_ANCHORS, timeout_ms=DEFAULT_TIMEOUT_MS)


def runtime_for_input(size_px: float, curve: RuntimeCurve) -> float:
    """Mean runtime for an input of the given size, capped at the timeout."""
    if size_px <= 0:
        raise ValueError("size_px must be positive")
    anchors = curve.anchors
    sizes = [a[0] for a in anchors]
    if size_px <= sizes[0] or len(anchors) == 1:
        return min(anchors[0][1], curve.timeout_ms)
    i = bisect_left(sizes, size_px)
    if i < len(sizes) and sizes[i] == size_px:
        return min(anchors[i][1], curve.timeout_ms)
    if i == len(sizes):
        i = len(sizes) - 1  # extrapolate along the last segment
    (s0, r0), (s1, r1) = anchors[i - 1], anchors[i]
    log_r = math.log(r0) + (math.log(r1) - math.log(r0)) * (
        (math.log(size_px) - math.log(s0)) / (math.log(s1) - math.log(s0)))
    return min(math.exp(log_r), curve.timeout_ms)


def mean_runtime_ms(payload: PayloadSpec, curve: RuntimeCurve) -> float:
    """Mean duration for a payload before jitter, capped at the timeout."""
    if payload.kind == PayloadKind.FIXED_RUNTIME:
        return min(payload.fixed_ms, curve.timeout_ms)
    if payload.kind == PayloadKind.SIZED_INPUT:
        return runtime_for_input(payload.size_px, curve)
    return min(payload.inflation_target_ms, curve.timeout_ms)


def check_jitter(jitter_fraction: float) -> None:
    if not 0.0 <= jitter_fraction < 1.0:
        raise ConfigError("jitter fraction must be in [0, 1)")


def sample_runtime(payload: PayloadSpec, curve: RuntimeCurve,
                   jitter_fraction: float, rng: np.random.Generator) -> float:
    """One duration draw: mean * U[1-j, 1+j], capped at the timeout.

    With jitter 0 no randomness is consumed and the mean comes back exactly.
    """
    check_jitter(jitter_fraction)
    mean = mean_runtime_ms(payload, curve)
    if jitter_fraction == 0.0:
        return mean
    factor = rng.uniform(1.0 - jitter_fraction, 1.0 + jitter_fraction)
    return min(mean * factor, curve.timeout_ms)
