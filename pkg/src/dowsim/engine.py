"""Execution engine: an autoscaled replica pool serving admitted requests.

Each replica runs one invocation at a time; arrivals that find no idle
replica wait in a FIFO queue (the platform never sheds load itself, that is
the admission layer's job). A target-tracking autoscaler re-evaluates at
fixed boundaries: the target is ceil(previous window's admitted arrival
rate / per_replica_capacity_rps), clamped to [min_replicas, max_replicas].
Scale-ups add fresh replicas that pay cold_start_ms on first use;
scale-downs remove idle replicas immediately and mark surplus busy ones for
removal on completion, though a marked replica keeps serving while the
queue is non-empty so admitted work always finishes.

The hot loop is a compiled event loop over (arrival, completion, boundary)
events with a binary heap of busy-replica finish times; ties process
completions first, then boundaries, then arrivals. Per-invocation rows and
fixed 20 s metric buckets come out as numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path
from typing import Iterator

import numpy as np
from numba import njit

from .errors import ConfigError, SimulationError
from .pricing import INVOCATION_FAMILY, SECONDS_FAMILY, UsageTotals
from .runtime import RuntimeCurve, check_jitter, mean_runtime_ms
from .traffic import ProfileRef
from .waf import AdmissionLog

METRIC_BUCKET_MS = 20_000

_METRICS_CSV_HEADER = ("bucket_start_ms,invocations,mean_runtime_ms,replicas,"
                       "queue_depth,dropped_rate_limit,dropped_adaptive,"
                       "dropped_gateway_limit")


@dataclass(frozen=True)
class PlatformSpec:
    memory_mb: int
    per_replica_capacity_rps: float
    max_replicas: int
    min_replicas: int = 1
    timeout_ms: float = 300_000.0  # hard execution cap
    scale_interval_ms: int = 20_000
    cold_start_ms: float = 0.0
    billing_granularity_ms: int = 100

    def __post_init__(self) -> None:
        if self.memory_mb < 1:
            raise ConfigError("memory_mb must be >= 1")
        if self.per_replica_capacity_rps <= 0:
            raise ConfigError("per_replica_capacity_rps must be positive")
        if self.min_replicas < 0:
            raise ConfigError("min_replicas must be >= 0")
        if self.max_replicas < max(1, self.min_replicas):
            raise ConfigError("max_replicas must be >= max(1, min_replicas)")
        if self.timeout_ms <= 0:
            raise ConfigError("timeout_ms must be positive")
        if self.scale_interval_ms < 1:
            raise ConfigError("scale_interval_ms must be >= 1")
        if self.cold_start_ms < 0:
            raise ConfigError("cold_start_ms must be >= 0")
        if self.billing_granularity_ms < 1:
            raise ConfigError("billing_granularity_ms must be >= 1")


class InvocationLog:
    """Columnar per-invocation outcomes for the admitted events."""

    __slots__ = ("arrival_ms", "start_ms", "finish_ms", "runtime_ms",
                 "billed_ms", "cold_start", "profile", "profiles")

    def __init__(self, arrival_ms: np.ndarray, start_ms: np.ndarray,
                 finish_ms: np.ndarray, runtime_ms: np.ndarray,
                 billed_ms: np.ndarray, cold_start: np.ndarray,
                 profile: np.ndarray, profiles: tuple[ProfileRef, ...]) -> None:
        self.arrival_ms = arrival_ms
        self.start_ms = start_ms
        self.finish_ms = finish_ms
        self.runtime_ms = runtime_ms
        self.billed_ms = billed_ms
        self.cold_start = cold_start
        self.profile = profile
        self.profiles = profiles

    def __len__(self) -> int:
        return int(self.arrival_ms.shape[0])

    def subset(self, mask: np.ndarray) -> "InvocationLog":
        return InvocationLog(
            self.arrival_ms[mask], self.start_ms[mask], self.finish_ms[mask],
            self.runtime_ms[mask], self.billed_ms[mask], self.cold_start[mask],
            self.profile[mask], self.profiles)


@dataclass(frozen=True)
class MetricsSeries:
    """Fixed-width time buckets of platform observables."""

    bucket_ms: int
    bucket_start_ms: np.ndarray
    invocations: np.ndarray
    mean_runtime_ms: np.ndarray
    replicas: np.ndarray
    queue_depth: np.ndarray
    dropped_rate_limit: np.ndarray
    dropped_adaptive: np.ndarray
    dropped_gateway_limit: np.ndarray


@dataclass(frozen=True)
class SimulationResult:
    platform: PlatformSpec
    admissions: AdmissionLog
    invocations: InvocationLog
    metrics: MetricsSeries


@njit(cache=True)
def _heap_push(heap, size, value):
    heap[size] = value
    i = size
    while i > 0:
        parent = (i - 1) // 2
        if heap[parent] <= heap[i]:
            break
        tmp = heap[parent]
        heap[parent] = heap[i]
        heap[i] = tmp
        i = parent
    return size + 1


@njit(cache=True)
def _heap_pop(heap, size):
    top = heap[0]
    size -= 1
    heap[0] = heap[size]
    i = 0
    while True:
        left = 2 * i + 1
        right = left + 1
        smallest = i
        if left < size and heap[left] < heap[smallest]:
            smallest = left
        if right < size and heap[right] < heap[smallest]:
            smallest = right
        if smallest == i:
            break
        tmp = heap[smallest]
        heap[smallest] = heap[i]
        heap[i] = tmp
        i = smallest
    return top, size


@njit(cache=True)
def _simulate(arr_ts, runtime, boundary_targets, interval_ms, cold_start_ms,
              min_replicas, max_replicas, out_start, out_cold,
              change_t, change_alive):
    """Event loop. Fills per-event starts/cold flags and the replica-count
    change timeline; returns the number of timeline entries."""
    n = arr_ts.shape[0]
    heap = np.empty(max_replicas, np.float64)
    heap_size = 0
    ring = np.empty(n + 1, np.int64)
    head = 0
    tail = 0
    ring_cap = ring.shape[0]

    idle_fresh = int(boundary_targets[0])
    idle_used = 0
    pending = 0
    alive = idle_fresh
    nc = 0
    change_t[nc] = 0.0
    change_alive[nc] = alive
    nc += 1

    inf = np.inf
    b = 1
    i = 0
    while True:
        # the autoscaler keeps evaluating boundaries after traffic ends, so
        # scale-downs to the floor still land on the timeline
        if (i >= n and heap_size == 0 and head == tail
                and b >= boundary_targets.shape[0]):
            break
        t_arr = arr_ts[i] if i < n else inf
        t_comp = heap[0] if heap_size > 0 else inf
        t_bound = b * interval_ms

        if t_comp <= t_bound and t_comp <= t_arr:
            top, heap_size = _heap_pop(heap, heap_size)
            if head != tail:
                # keep serving the backlog even if marked for removal
                idx = ring[head]
                head = (head + 1) % ring_cap
                out_start[idx] = top
                out_cold[idx] = 0
                heap_size = _heap_push(heap, heap_size, top + runtime[idx])
            elif pending > 0:
                pending -= 1
                alive -= 1
                change_t[nc] = top
                change_alive[nc] = alive
                nc += 1
            else:
                idle_used += 1
        elif t_bound <= t_arr:
            if b < boundary_targets.shape[0]:
                target = boundary_targets[b]
            else:
                target = min_replicas
            committed = alive - pending
            if target > committed:
                cancel = target - committed
                if cancel > pending:
                    cancel = pending
                pending -= cancel
                committed += cancel
                add = target - committed
                if add > 0:
                    idle_fresh += add
                    alive += add
                    change_t[nc] = t_bound
                    change_alive[nc] = alive
                    nc += 1
                while head != tail and idle_used + idle_fresh > 0:
                    idx = ring[head]
                    head = (head + 1) % ring_cap
                    if idle_used > 0:
                        idle_used -= 1
                        out_start[idx] = t_bound
                        out_cold[idx] = 0
                        heap_size = _heap_push(heap, heap_size,
                                               t_bound + runtime[idx])
                    else:
                        idle_fresh -= 1
                        st = t_bound + cold_start_ms
                        out_start[idx] = st
                        out_cold[idx] = 1
                        heap_size = _heap_push(heap, heap_size,
                                               st + runtime[idx])
            elif target < committed:
                shrink = committed - target
                take = idle_fresh if idle_fresh < shrink else shrink
                idle_fresh -= take
                shrink -= take
                removed = take
                take = idle_used if idle_used < shrink else shrink
                idle_used -= take
                shrink -= take
                removed += take
                pending += shrink
                if removed > 0:
                    alive -= removed
                    change_t[nc] = t_bound
                    change_alive[nc] = alive
                    nc += 1
            b += 1
        else:
            if idle_used > 0:
                idle_used -= 1
                out_start[i] = t_arr
                out_cold[i] = 0
                heap_size = _heap_push(heap, heap_size, t_arr + runtime[i])
            elif idle_fresh > 0:
                idle_fresh -= 1
                st = t_arr + cold_start_ms
                out_start[i] = st
                out_cold[i] = 1
                heap_size = _heap_push(heap, heap_size, st + runtime[i])
            else:
                ring[tail] = i
                tail = (tail + 1) % ring_cap
            i += 1
    return nc


def _boundary_targets(arr_ts: np.ndarray, platform: PlatformSpec,
                      duration_ms: int) -> np.ndarray:
    """Target replica count per boundary index; entry 0 is the warm pool."""
    interval = platform.scale_interval_ms
    n_windows = max(math.ceil(duration_ms / interval), 1)
    if arr_ts.shape[0]:
        last_window = int(arr_ts[-1]) // interval
        n_windows = max(n_windows, last_window + 2)
    counts = np.bincount((arr_ts // interval).astype(np.int64),
                         minlength=n_windows)[:n_windows]
    rates = counts / (interval / 1000.0)
    wanted = np.ceil(rates / platform.per_replica_capacity_rps)
    clamped = np.clip(wanted, platform.min_replicas, platform.max_replicas)
    targets = np.empty(n_windows + 1, dtype=np.int64)
    targets[0] = platform.min_replicas
    targets[1:] = clamped.astype(np.int64)
    return targets


def _sample_runtimes(admitted_profile: np.ndarray, profiles: tuple[ProfileRef, ...],
                     curve: RuntimeCurve, platform: PlatformSpec, seed: int,
                     jitter_fraction: float) -> np.ndarray:
    check_jitter(jitter_fraction)
    means = np.asarray([mean_runtime_ms(ref.payload, curve) for ref in profiles],
                       dtype=np.float64)
    if means.shape[0] == 0:
        return np.empty(0, dtype=np.float64)
    values = means[admitted_profile]
    if jitter_fraction > 0.0:
        rng = np.random.default_rng(seed)
        values = values * rng.uniform(1.0 - jitter_fraction,
                                      1.0 + jitter_fraction, values.shape[0])
    return np.minimum(values, platform.timeout_ms)


def run(admissions: AdmissionLog, platform: PlatformSpec, curve: RuntimeCurve,
        seed: int, *, duration_ms: int | None = None,
        jitter_fraction: float = 0.0) -> SimulationResult:
    """Execute the admitted events on the platform model."""
    stream = admissions.stream
    mask = admissions.admitted_mask()
    arr_ts = stream.ts[mask]
    profile = stream.profile[mask]
    n = arr_ts.shape[0]

    if duration_ms is None:
        duration_ms = int(stream.ts[-1]) + 1 if len(stream) else 0

    runtime = _sample_runtimes(profile, stream.profiles, curve, platform,
                               seed, jitter_fraction)

    out_start = np.full(n, np.nan, dtype=np.float64)
    out_cold = np.zeros(n, dtype=np.uint8)
    if n:
        targets = _boundary_targets(arr_ts, platform, duration_ms)
        cap = n + targets.shape[0] + 16
        change_t = np.empty(cap, dtype=np.float64)
        change_alive = np.empty(cap, dtype=np.int64)
        nc = _simulate(arr_ts.astype(np.float64), runtime, targets,
                       float(platform.scale_interval_ms),
                       float(platform.cold_start_ms),
                       platform.min_replicas, platform.max_replicas,
                       out_start, out_cold, change_t, change_alive)
        change_t = change_t[:nc]
        change_alive = change_alive[:nc]
        if np.isnan(out_start).any():
            raise SimulationError("scheduler left admitted events unserved")
    else:
        change_t = np.zeros(1, dtype=np.float64)
        change_alive = np.full(1, platform.min_replicas, dtype=np.int64)

    finish = out_start + runtime
    granularity = platform.billing_granularity_ms
    billed = (np.maximum(1, np.ceil(runtime / granularity))
              .astype(np.int64) * granularity)
    invocations = InvocationLog(
        arrival_ms=arr_ts, start_ms=out_start, finish_ms=finish,
        runtime_ms=runtime, billed_ms=billed,
        cold_start=out_cold.astype(bool), profile=profile,
        profiles=stream.profiles)

    metrics = _build_metrics(admissions, invocations, platform, duration_ms,
                             change_t, change_alive)
    return SimulationResult(platform=platform, admissions=admissions,
                            invocations=invocations, metrics=metrics)


def _build_metrics(admissions: AdmissionLog, inv: InvocationLog,
                   platform: PlatformSpec, duration_ms: int,
                   change_t: np.ndarray, change_alive: np.ndarray) -> MetricsSeries:
    horizon = duration_ms
    if len(inv):
        horizon = max(horizon, int(math.ceil(float(inv.finish_ms[-1]))),
                      int(math.ceil(float(inv.finish_ms.max()))))
    n_buckets = max(1, math.ceil(horizon / METRIC_BUCKET_MS))
    starts = np.arange(n_buckets, dtype=np.int64) * METRIC_BUCKET_MS

    bucket = inv.arrival_ms // METRIC_BUCKET_MS
    counts = np.bincount(bucket, minlength=n_buckets)[:n_buckets]
    sums = np.bincount(bucket, weights=inv.runtime_ms,
                       minlength=n_buckets)[:n_buckets]
    mean_rt = sums / np.maximum(counts, 1)

    replicas = change_alive[
        np.searchsorted(change_t, starts.astype(np.float64), side="right") - 1]

    assign = inv.start_ms - inv.cold_start * platform.cold_start_ms
    ends = starts + METRIC_BUCKET_MS
    arrived = np.searchsorted(inv.arrival_ms, ends, side="right")
    begun = np.searchsorted(assign, ends.astype(np.float64), side="right")
    queue = arrived - begun

    drop_arrays = []
    for code in (1, 2, 3):
        ts = admissions.stream.ts[admissions.disposition == code]
        drop_arrays.append(
            np.bincount(ts // METRIC_BUCKET_MS, minlength=n_buckets)[:n_buckets])

    return MetricsSeries(
        bucket_ms=METRIC_BUCKET_MS, bucket_start_ms=starts,
        invocations=counts.astype(np.int64), mean_runtime_ms=mean_rt,
        replicas=replicas.astype(np.int64), queue_depth=queue.astype(np.int64),
        dropped_rate_limit=drop_arrays[0].astype(np.int64),
        dropped_adaptive=drop_arrays[1].astype(np.int64),
        dropped_gateway_limit=drop_arrays[2].astype(np.int64))


def _per_target_totals(inv: InvocationLog) -> list[tuple[str, int, float]]:
    """(target, count, execution ms) in first-appearance order."""
    out: list[tuple[str, int, float]] = []
    seen: dict[str, int] = {}
    for idx, ref in enumerate(inv.profiles):
        mask = inv.profile == idx
        count = int(mask.sum())
        if count == 0:
            continue
        ms = float(inv.runtime_ms[mask].sum())
        if ref.target in seen:
            pos = seen[ref.target]
            name, c0, m0 = out[pos]
            out[pos] = (name, c0 + count, m0 + ms)
        else:
            seen[ref.target] = len(out)
            out.append((ref.target, count, ms))
    return out


def usage_totals(inv: InvocationLog, memory_mb: int) -> UsageTotals:
    """Aggregate the log the same way the text export does, so the totals
    survive an export/parse round trip bit for bit."""
    groups = _per_target_totals(inv)
    count = sum(c for _, c, _ in groups)
    cumulative = float(sum((Decimal(repr(ms)) for _, _, ms in groups),
                           Decimal(0)))
    return UsageTotals(invocation_count=count, cumulative_execution_ms=cumulative,
                       memory_mb=memory_mb)


def export_usage_metrics(inv: InvocationLog, path: str | Path) -> None:
    """Write usage counters in metrics text exposition format."""
    groups = _per_target_totals(inv)
    lines = [
        f"# HELP {INVOCATION_FAMILY} Completed function invocations by target.",
        f"# TYPE {INVOCATION_FAMILY} counter",
    ]
    lines += [f'{INVOCATION_FAMILY}{{function="{t}"}} {c}' for t, c, _ in groups]
    lines += [
        f"# HELP {SECONDS_FAMILY} Cumulative execution time by target, in seconds.",
        f"# TYPE {SECONDS_FAMILY} counter",
    ]
    lines += [f'{SECONDS_FAMILY}{{function="{t}"}} {Decimal(repr(ms)) / 1000}'
              for t, _, ms in groups]
    Path(path).write_text("\n".join(lines) + "\n")


def write_metrics_csv(metrics: MetricsSeries, path: str | Path) -> None:
    rows = zip(metrics.bucket_start_ms.tolist(), metrics.invocations.tolist(),
               metrics.mean_runtime_ms.tolist(), metrics.replicas.tolist(),
               metrics.queue_depth.tolist(), metrics.dropped_rate_limit.tolist(),
               metrics.dropped_adaptive.tolist(),
               metrics.dropped_gateway_limit.tolist())
    with Path(path).open("w", newline="") as fh:
        fh.write(_METRICS_CSV_HEADER + "\n")
        for start, inv_count, mean_rt, reps, queue, d1, d2, d3 in rows:
            fh.write(f"{start},{inv_count},{mean_rt!r},{reps},{queue},"
                     f"{d1},{d2},{d3}\n")
