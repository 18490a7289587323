"""Admission control in front of the platform.

Three modes. Off admits everything. Static counts requests per presented IP
in fixed windows aligned to the scenario clock and drops past a budget, so
it only holds up while an attacker keeps one identity. Adaptive ignores
identity and tracks total per-window volume against an EWMA baseline: a
window whose incoming count exceeds threshold_multiplier * baseline keeps
its first floor(threshold) arrivals and drops the rest, and the baseline is
updated from the admitted count only. A gateway-wide hard cap on requests
per second, when set, is applied last in every mode.

Every event gets exactly one disposition; the log is columnar (int8 codes
beside the stream) so month-long inputs stay cheap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterator

import numpy as np

from .errors import ConfigError, StreamOrderError
from .traffic import EventStream, RequestEvent

GATEWAY_BUCKET_MS = 1_000


class WafMode(str, Enum):
    OFF = "off"
    STATIC = "static"
    ADAPTIVE = "adaptive"


class Disposition(str, Enum):
    ADMITTED = "admitted"
    DROPPED_RATE_LIMIT = "dropped_rate_limit"
    DROPPED_ADAPTIVE = "dropped_adaptive"
    DROPPED_GATEWAY_LIMIT = "dropped_gateway_limit"


# index in this tuple = the int8 code stored in AdmissionLog.disposition
DISPOSITION_CODES = tuple(Disposition)


@dataclass(frozen=True)
class AdaptiveRule:
    """EWMA volume baseline: b <- alpha * admitted + (1 - alpha) * b."""

    ewma_alpha: float
    threshold_multiplier: float
    initial_baseline: float | None = None  # None = first window's count

    def __post_init__(self) -> None:
        if not 0.0 < self.ewma_alpha <= 1.0:
            raise ConfigError("ewma_alpha must be in (0, 1]")
        if self.threshold_multiplier <= 1.0:
            raise ConfigError("threshold_multiplier must be > 1")
        if self.initial_baseline is not None and self.initial_baseline <= 0.0:
            raise ConfigError("initial_baseline must be positive")


@dataclass(frozen=True)
class WafPolicy:
    mode: WafMode
    per_ip_limit: int | None = None
    window_ms: int | None = None
    adaptive: AdaptiveRule | None = None
    gateway_hard_limit_rps: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", WafMode(self.mode))
        if self.gateway_hard_limit_rps is not None and self.gateway_hard_limit_rps <= 0:
            raise ConfigError("gateway_hard_limit_rps must be positive")
        if self.window_ms is not None and self.window_ms < 1:
            raise ConfigError("window_ms must be >= 1")
        if self.per_ip_limit is not None and self.per_ip_limit < 1:
            raise ConfigError("per_ip_limit must be >= 1")
        if self.mode == WafMode.STATIC:
            if self.per_ip_limit is None or self.window_ms is None:
                raise ConfigError("static mode needs per_ip_limit and window_ms")
            if self.adaptive is not None:
                raise ConfigError("static mode takes no adaptive rule")
        elif self.mode == WafMode.ADAPTIVE:
            if self.adaptive is None or self.window_ms is None:
                raise ConfigError("adaptive mode needs an adaptive rule and window_ms")
            if self.per_ip_limit is not None:
                raise ConfigError("adaptive mode takes no per_ip_limit")
        else:
            if self.per_ip_limit is not None or self.adaptive is not None or \
                    self.window_ms is not None:
                raise ConfigError("off mode takes only gateway_hard_limit_rps")


@dataclass(frozen=True)
class AdmissionRecord:
    event: RequestEvent
    disposition: Disposition


class AdmissionLog:
    """An event stream plus one disposition code per event."""

    __slots__ = ("stream", "disposition")

    def __init__(self, stream: EventStream, disposition: np.ndarray) -> None:
        self.stream = stream
        self.disposition = disposition

    def __len__(self) -> int:
        return len(self.stream)

    def admitted_mask(self) -> np.ndarray:
        return self.disposition == 0

    def counts(self) -> dict[Disposition, int]:
        c = np.bincount(self.disposition, minlength=len(DISPOSITION_CODES))
        return {d: int(c[i]) for i, d in enumerate(DISPOSITION_CODES)}

    def labels(self) -> list[str]:
        values = [d.value for d in DISPOSITION_CODES]
        return [values[c] for c in self.disposition.tolist()]

    def records(self) -> Iterator[AdmissionRecord]:
        for event, code in zip(self.stream.records(), self.disposition.tolist()):
            yield AdmissionRecord(event=event, disposition=DISPOSITION_CODES[code])


def _group_cumcount_exceeds(primary: np.ndarray, window: np.ndarray,
                            limit: float) -> np.ndarray:
    """True where an event's running count within its (primary, window)
    group has already reached the limit. Events must be timestamp-ordered;
    the stable sort keeps arrival order within each group."""
    n = primary.shape[0]
    if n == 0:
        return np.zeros(0, dtype=bool)
    order = np.lexsort((window, primary))
    p_s, w_s = primary[order], window[order]
    new = np.empty(n, dtype=bool)
    new[0] = True
    new[1:] = (p_s[1:] != p_s[:-1]) | (w_s[1:] != w_s[:-1])
    idx = np.arange(n)
    start = np.maximum.accumulate(np.where(new, idx, 0))
    exceeded = np.empty(n, dtype=bool)
    exceeded[order] = (idx - start) >= limit
    return exceeded


def _adaptive_scan(ts: np.ndarray, window_ms: int,
                   rule: AdaptiveRule) -> tuple[list[tuple[int, int]],
                                                list[tuple[int, float]]]:
    """Replay the EWMA recurrence over consecutive windows.

    Returns the event index ranges to drop and the post-update baseline per
    window, from the first to the last window that holds traffic. Interior
    empty windows still update the baseline (with zero admitted).
    """
    if ts.shape[0] == 0:
        return [], []
    first = int(ts[0]) // window_ms
    last = int(ts[-1]) // window_ms
    edges = np.arange(first, last + 2, dtype=np.int64) * window_ms
    bounds = np.searchsorted(ts, edges)
    baseline = rule.initial_baseline
    if baseline is None:
        baseline = float(int(bounds[1]) - int(bounds[0]))
    drops: list[tuple[int, int]] = []
    trace: list[tuple[int, float]] = []
    for i in range(bounds.shape[0] - 1):
        lo, hi = int(bounds[i]), int(bounds[i + 1])
        incoming = hi - lo
        cap = rule.threshold_multiplier * baseline
        if incoming > cap:
            admitted = int(math.floor(cap))
            drops.append((lo + admitted, hi))
        else:
            admitted = incoming
        baseline = rule.ewma_alpha * admitted + (1.0 - rule.ewma_alpha) * baseline
        trace.append((first + i, baseline))
    return drops, trace


def admit(stream: EventStream, policy: WafPolicy) -> AdmissionLog:
    """Run the stream through the policy; every event gets a disposition."""
    ts = stream.ts
    if len(stream) > 1 and np.any(np.diff(ts) < 0):
        raise StreamOrderError("admission input is not timestamp-ordered")
    disposition = np.zeros(len(stream), dtype=np.int8)

    if policy.mode == WafMode.STATIC:
        rejected = _group_cumcount_exceeds(
            stream.ip, ts // policy.window_ms, policy.per_ip_limit)
        disposition[rejected] = 1
    elif policy.mode == WafMode.ADAPTIVE:
        drops, _ = _adaptive_scan(ts, policy.window_ms, policy.adaptive)
        for lo, hi in drops:
            disposition[lo:hi] = 2

    if policy.gateway_hard_limit_rps is not None:
        surviving = np.flatnonzero(disposition == 0)
        if surviving.shape[0]:
            buckets = ts[surviving] // GATEWAY_BUCKET_MS
            over = _group_cumcount_exceeds(
                buckets, np.zeros_like(buckets), policy.gateway_hard_limit_rps)
            disposition[surviving[over]] = 3

    return AdmissionLog(stream, disposition)


def baseline_trace(log: AdmissionLog, policy: WafPolicy) -> list[tuple[int, float]]:
    """(window index, baseline after update) per window the adaptive rule saw.

    The adaptive rule is the first applied, so the trace is a pure function
    of the stream's timestamps and the rule.
    """
    if policy.mode != WafMode.ADAPTIVE:
        raise ValueError("baseline_trace needs an adaptive policy")
    _, trace = _adaptive_scan(log.stream.ts, policy.window_ms, policy.adaptive)
    return trace
