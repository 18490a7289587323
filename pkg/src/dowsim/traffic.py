"""Attack traffic generators.

Every generator produces a timestamp-ordered stream of request events from a
seeded profile, so a scenario replays bit-for-bit. Arrival processes are
Poisson (drawn as a Poisson count plus uniform order statistics); the kinds
differ in how rate is shaped over time and how many sources emit:

  flood   one source hammering at a fixed rate
  leech   a fleet of sources, each at a sustainable per-node rate
  botnet  a leech whose nodes come online at jittered start times
  ramp    a single shape whose rate grows by a fixed fraction per window
  legit   background users on a 24 h diurnal curve (factor 0.5..1.5)

Sources can rotate their presented IP every ip_rotation_period_ms, which is
what defeats per-IP accountability downstream.

Streams are columnar: numpy arrays of timestamps and small-integer ids that
index into string tables. That keeps hundred-million-event months tractable;
records() inflates per-event objects when object-level access is wanted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import ConfigError, StreamOrderError
from .runtime import PayloadKind, PayloadSpec

DIURNAL_PERIOD_MS = 86_400_000

_CSV_HEADER = "timestamp_ms,source_ip,target,payload_kind,size"


class TrafficKind(str, Enum):
    FLOOD = "flood"
    LEECH = "leech"
    BOTNET = "botnet"
    RAMP = "ramp"
    LEGIT = "legit"


@dataclass(frozen=True)
class RampSpec:
    """Rate schedule: initial_rate_rps * (1 + growth)^window."""

    initial_rate_rps: float
    growth_per_window: float
    window_ms: int

    def __post_init__(self) -> None:
        if self.initial_rate_rps <= 0:
            raise ConfigError("ramp initial_rate_rps must be positive")
        if self.growth_per_window < 0:
            raise ConfigError("ramp growth_per_window must be >= 0")
        if self.window_ms < 1:
            raise ConfigError("ramp window_ms must be >= 1")


@dataclass(frozen=True)
class AttackProfile:
    name: str
    kind: TrafficKind
    duration_ms: int
    seed: int
    rate_rps: float | None = None
    node_count: int = 1
    ip_rotation_period_ms: int = 0  # 0 = never rotate
    ramp: RampSpec | None = None
    start_ms: int = 0
    start_jitter_ms: int = 60_000  # botnet only: node start spread
    payload: PayloadSpec = PayloadSpec(kind=PayloadKind.FIXED_RUNTIME, fixed_ms=30.0)
    target: str = "function"

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", TrafficKind(self.kind))
        if not self.name or not self.target:
            raise ConfigError("profile needs a name and a target")
        if self.duration_ms < 0 or self.start_ms < 0:
            raise ConfigError(f"{self.name}: durations and offsets must be >= 0")
        if self.ip_rotation_period_ms < 0 or self.start_jitter_ms < 0:
            raise ConfigError(f"{self.name}: periods must be >= 0")
        if self.node_count < 1:
            raise ConfigError(f"{self.name}: node_count must be >= 1")
        if self.kind == TrafficKind.FLOOD and self.node_count != 1:
            raise ConfigError(f"{self.name}: a flood has exactly one source")
        if self.kind == TrafficKind.RAMP:
            if self.ramp is None:
                raise ConfigError(f"{self.name}: ramp profiles need a ramp spec")
            if self.rate_rps is not None:
                raise ConfigError(f"{self.name}: ramp profiles take their rate from the ramp spec")
        else:
            if self.ramp is not None:
                raise ConfigError(f"{self.name}: only ramp profiles take a ramp spec")
            if self.rate_rps is None or self.rate_rps <= 0:
                raise ConfigError(f"{self.name}: rate_rps must be positive")


@dataclass(frozen=True)
class ProfileRef:
    """Per-stream metadata shared by all events a profile emitted."""

    name: str
    kind: TrafficKind
    payload: PayloadSpec
    target: str


@dataclass(frozen=True)
class RequestEvent:
    timestamp_ms: int
    source_id: str
    source_ip: str
    payload: PayloadSpec
    target: str


class EventStream:
    """Columnar, timestamp-ordered request stream."""

    __slots__ = ("ts", "source", "ip", "profile", "source_ids", "ips", "profiles")

    def __init__(self, ts: np.ndarray, source: np.ndarray, ip: np.ndarray,
                 profile: np.ndarray, source_ids: tuple[str, ...],
                 ips: tuple[str, ...], profiles: tuple[ProfileRef, ...]) -> None:
        self.ts = ts
        self.source = source
        self.ip = ip
        self.profile = profile
        self.source_ids = source_ids
        self.ips = ips
        self.profiles = profiles

    def __len__(self) -> int:
        return int(self.ts.shape[0])

    @classmethod
    def empty(cls) -> "EventStream":
        return cls(
            np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int32),
            np.empty(0, dtype=np.int32), np.empty(0, dtype=np.int32),
            (), (), (),
        )

    def records(self) -> Iterator[RequestEvent]:
        ts, src, ip, prof = (self.ts.tolist(), self.source.tolist(),
                             self.ip.tolist(), self.profile.tolist())
        for t, s, i, p in zip(ts, src, ip, prof):
            ref = self.profiles[p]
            yield RequestEvent(t, self.source_ids[s], self.ips[i], ref.payload, ref.target)

    @classmethod
    def from_records(cls, records: Iterable[RequestEvent], *,
                     kind: TrafficKind = TrafficKind.FLOOD) -> "EventStream":
        """Build a stream from explicit events; handy for tests and replays."""
        source_idx: dict[str, int] = {}
        ip_idx: dict[str, int] = {}
        prof_idx: dict[tuple, int] = {}
        profiles: list[ProfileRef] = []
        ts, src, ip, prof = [], [], [], []
        for rec in records:
            ts.append(rec.timestamp_ms)
            src.append(source_idx.setdefault(rec.source_id, len(source_idx)))
            ip.append(ip_idx.setdefault(rec.source_ip, len(ip_idx)))
            key = (rec.payload, rec.target)
            if key not in prof_idx:
                prof_idx[key] = len(profiles)
                profiles.append(ProfileRef(
                    name=f"synthetic-{len(profiles)}", kind=kind,
                    payload=rec.payload, target=rec.target))
            prof.append(prof_idx[key])
        return cls(
            np.asarray(ts, dtype=np.int64), np.asarray(src, dtype=np.int32),
            np.asarray(ip, dtype=np.int32), np.asarray(prof, dtype=np.int32),
            tuple(source_idx), tuple(ip_idx), tuple(profiles),
        )


def _node_rng(profile: AttackProfile, node: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([profile.seed, node]))


def _uniform_poisson_ms(rng: np.random.Generator, rate_rps: float, span_ms: int) -> np.ndarray:
    """One realization of a homogeneous Poisson process over [0, span)."""
    if span_ms <= 0 or rate_rps <= 0:
        return np.empty(0, dtype=np.float64)
    n = int(rng.poisson(rate_rps * span_ms / 1000.0))
    return np.sort(rng.random(n) * span_ms)


def _node_times_ms(profile: AttackProfile, node: int) -> np.ndarray:
    """Relative event times (float ms within the profile span) for one node."""
    rng = _node_rng(profile, node)
    kind = profile.kind
    if kind in (TrafficKind.FLOOD, TrafficKind.LEECH):
        return _uniform_poisson_ms(rng, profile.rate_rps, profile.duration_ms)

    if kind == TrafficKind.BOTNET:
        offset = 0
        if profile.start_jitter_ms > 0:
            offset = int(rng.integers(0, profile.start_jitter_ms))
        span = profile.duration_ms - offset
        return _uniform_poisson_ms(rng, profile.rate_rps, span) + offset

    if kind == TrafficKind.RAMP:
        ramp = profile.ramp
        span = profile.duration_ms
        n_windows = math.ceil(span / ramp.window_ms)
        if n_windows == 0:
            return np.empty(0, dtype=np.float64)
        lens = np.full(n_windows, float(ramp.window_ms))
        lens[-1] = span - (n_windows - 1) * ramp.window_ms
        rates = ramp.initial_rate_rps * (1.0 + ramp.growth_per_window) ** np.arange(n_windows)
        counts = rng.poisson(rates * lens / 1000.0)
        starts = np.repeat(np.arange(n_windows) * float(ramp.window_ms), counts)
        widths = np.repeat(lens, counts)
        # windows are disjoint, so one global sort orders within each too
        return np.sort(starts + rng.random(int(counts.sum())) * widths)

    # legit: thin a 1.5x-rate process down to the diurnal intensity
    lam_max = profile.rate_rps * 1.5
    times = _uniform_poisson_ms(rng, lam_max, profile.duration_ms)
    absolute = times + profile.start_ms
    factor = 1.0 + 0.5 * np.sin(2.0 * np.pi * absolute / DIURNAL_PERIOD_MS)
    keep = rng.random(times.shape[0]) < factor / 1.5
    return times[keep]


def generate(profile: AttackProfile) -> EventStream:
    """Realize a profile into a timestamp-ordered event stream."""
    parts: list[np.ndarray] = []
    nodes: list[np.ndarray] = []
    for j in range(profile.node_count):
        rel = _node_times_ms(profile, j)
        parts.append(rel)
        nodes.append(np.full(rel.shape[0], j, dtype=np.int32))
    if not parts or sum(p.shape[0] for p in parts) == 0:
        return EventStream.empty()

    rel_ms = np.concatenate(parts)
    node = np.concatenate(nodes)
    ts = rel_ms.astype(np.int64) + profile.start_ms
    order = np.lexsort((node, ts))
    ts, node = ts[order], node[order]

    source_ids = tuple(f"{profile.name}-n{j:05d}" for j in range(profile.node_count))
    period = profile.ip_rotation_period_ms
    if period > 0:
        rot = (ts - profile.start_ms) // period
    else:
        rot = np.zeros(ts.shape[0], dtype=np.int64)
    # one table entry per (node, rotation) actually presented
    span_rot = int(rot.max()) + 1 if rot.shape[0] else 1
    key = node.astype(np.int64) * span_rot + rot
    uniq, ip = np.unique(key, return_inverse=True)
    ips = tuple(f"{source_ids[int(k) // span_rot]}-ip{int(k) % span_rot}" for k in uniq)

    ref = ProfileRef(name=profile.name, kind=profile.kind,
                     payload=profile.payload, target=profile.target)
    return EventStream(
        ts, node, ip.astype(np.int32),
        np.zeros(ts.shape[0], dtype=np.int32),
        source_ids, ips, (ref,),
    )


def merge(streams: Sequence[EventStream]) -> EventStream:
    """k-way merge by timestamp; ties order by (source_id, stream index)."""
    streams = list(streams)
    for idx, s in enumerate(streams):
        if len(s) > 1 and np.any(np.diff(s.ts) < 0):
            raise StreamOrderError(f"stream {idx} is not timestamp-ordered")
    if not streams:
        return EventStream.empty()

    source_map: dict[str, int] = {}
    ip_map: dict[str, int] = {}
    profiles: list[ProfileRef] = []
    ts_parts, src_parts, ip_parts, prof_parts, stream_parts = [], [], [], [], []
    for idx, s in enumerate(streams):
        src_remap = np.asarray([source_map.setdefault(name, len(source_map))
                                for name in s.source_ids], dtype=np.int32)
        ip_remap = np.asarray([ip_map.setdefault(name, len(ip_map))
                               for name in s.ips], dtype=np.int32)
        prof_offset = len(profiles)
        profiles.extend(s.profiles)
        if len(s) == 0:
            continue
        ts_parts.append(s.ts)
        src_parts.append(src_remap[s.source])
        ip_parts.append(ip_remap[s.ip])
        prof_parts.append(s.profile + prof_offset)
        stream_parts.append(np.full(len(s), idx, dtype=np.int32))

    if not ts_parts:
        return EventStream(
            np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int32),
            np.empty(0, dtype=np.int32), np.empty(0, dtype=np.int32),
            tuple(source_map), tuple(ip_map), tuple(profiles),
        )

    ts = np.concatenate(ts_parts)
    src = np.concatenate(src_parts)
    ip = np.concatenate(ip_parts)
    prof = np.concatenate(prof_parts)
    stream_idx = np.concatenate(stream_parts)

    # tie-break needs lexicographic ranks of the source_id strings
    rank_of = {name: r for r, name in enumerate(sorted(source_map))}
    rank_table = np.asarray([rank_of[name] for name in source_map], dtype=np.int64)
    order = np.lexsort((stream_idx, rank_table[src], ts))

    return EventStream(
        ts[order], src[order], ip[order], prof[order],
        tuple(source_map), tuple(ip_map), tuple(profiles),
    )


def payload_size_value(payload: PayloadSpec) -> float:
    """The magnitude column for event logs: whichever knob the kind uses."""
    if payload.kind == PayloadKind.FIXED_RUNTIME:
        return payload.fixed_ms
    if payload.kind == PayloadKind.SIZED_INPUT:
        return payload.size_px
    return payload.inflation_target_ms


def _format_size(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else repr(float(value))


def write_events_csv(stream: EventStream, path: str | Path,
                     dispositions: Sequence[str] | None = None) -> None:
    """Write the replay log; optional per-event dispositions add a column.

    Writes in chunks so month-long streams do not balloon memory.
    """
    path = Path(path)
    tails = [f",{ref.target},{ref.payload.kind.value},{_format_size(payload_size_value(ref.payload))}"
             for ref in stream.profiles]
    header = _CSV_HEADER + (",disposition" if dispositions is not None else "")
    chunk = 1_000_000
    with path.open("w", newline="") as fh:
        fh.write(header + "\n")
        for lo in range(0, len(stream), chunk):
            hi = min(lo + chunk, len(stream))
            ts = stream.ts[lo:hi].tolist()
            ip = stream.ip[lo:hi].tolist()
            prof = stream.profile[lo:hi].tolist()
            if dispositions is None:
                lines = [f"{t},{stream.ips[i]}{tails[p]}"
                         for t, i, p in zip(ts, ip, prof)]
            else:
                disp = dispositions[lo:hi]
                lines = [f"{t},{stream.ips[i]}{tails[p]},{d}"
                         for t, i, p, d in zip(ts, ip, prof, disp)]
            fh.write("\n".join(lines))
            fh.write("\n")
