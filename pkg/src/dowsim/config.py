"""Scenario configuration.

One structured document describes a full run: traffic profiles, the
admission policy, the platform, the runtime curve, and which pricing config
to bill against. Loading is strict: unknown keys, wrong types, and missing
referenced files are errors at load time, naming the file and the offending
key. Seeds are mandatory; per-profile and engine seeds are derived from the
scenario seed so one integer pins the whole run.
"""

from __future__ import annotations

import copy
import re
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
import yaml

from .engine import PlatformSpec
from .errors import ConfigError
from .pricing import PricingConfig, default_pricing_config, load_pricing_config
from .runtime import DEFAULT_ANCHORS, PayloadSpec, RuntimeCurve
from .traffic import AttackProfile, RampSpec
from .waf import AdaptiveRule, WafPolicy

_SCENARIO_KEYS = {"name", "seed", "duration_ms", "extrapolation_factor",
                  "jitter_fraction", "output_dir", "profiles", "waf",
                  "platform", "runtime_curve", "pricing"}
_PROFILE_KEYS = {"name", "kind", "rate_rps", "rate_per_hour", "node_count",
                 "ip_rotation_period_ms", "ramp", "start_ms", "start_jitter_ms",
                 "duration_ms", "payload", "target"}
_RAMP_KEYS = {"initial_rate_rps", "growth_per_window", "window_ms"}
_PAYLOAD_KEYS = {"kind", "fixed_ms", "size_px", "inflation_target_ms"}
_WAF_KEYS = {"mode", "per_ip_limit", "window_ms", "adaptive",
             "gateway_hard_limit_rps"}
_ADAPTIVE_KEYS = {"ewma_alpha", "threshold_multiplier", "initial_baseline"}
_PLATFORM_KEYS = {"memory_mb", "per_replica_capacity_rps", "max_replicas",
                  "min_replicas", "timeout_ms", "scale_interval_ms",
                  "cold_start_ms", "billing_granularity_ms"}
_CURVE_KEYS = {"anchors", "timeout_ms"}

_SEGMENT = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)(?:\[(\d+)\])?$")


def derive_seed(*path: int) -> int:
    """Stable child seed from an integer path rooted at the scenario seed."""
    return int(np.random.SeedSequence(list(path)).generate_state(1)[0])


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    duration_ms: int
    extrapolation_factor: int
    jitter_fraction: float
    profiles: tuple[AttackProfile, ...]
    waf: WafPolicy
    platform: PlatformSpec
    curve: RuntimeCurve
    pricing: PricingConfig
    output_dir: str | None = None

    @property
    def engine_seed(self) -> int:
        return derive_seed(self.seed, 2)

    def with_seed(self, seed: int) -> "Scenario":
        """Same scenario under a different root seed; profile seeds re-derive."""
        if seed < 0:
            raise ConfigError("seed must be >= 0")
        profiles = tuple(replace(p, seed=derive_seed(seed, 1, i))
                         for i, p in enumerate(self.profiles))
        return replace(self, seed=seed, profiles=profiles)


def _check_keys(record: dict, allowed: set[str], where: str) -> None:
    for key in record:
        if key not in allowed:
            raise ConfigError(f"{where}: unknown key {key!r}")


def _record(value: Any, where: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(f"{where}: expected a mapping")
    return value


def _field(record: dict, key: str, kinds: tuple, where: str, default: Any = ...):
    if key not in record:
        if default is ...:
            raise ConfigError(f"{where}: missing required key {key!r}")
        return default
    value = record[key]
    if isinstance(value, bool) and bool not in kinds:
        raise ConfigError(f"{where}: {key} has the wrong type")
    if not isinstance(value, kinds):
        raise ConfigError(f"{where}: {key} has the wrong type")
    return value


def _build_payload(rec: Any, where: str) -> PayloadSpec:
    rec = _record(rec, where)
    _check_keys(rec, _PAYLOAD_KEYS, where)
    kind = _field(rec, "kind", (str,), where)
    numbers = {k: float(_field(rec, k, (int, float), where))
               for k in ("fixed_ms", "size_px", "inflation_target_ms") if k in rec}
    try:
        return PayloadSpec(kind=kind, **numbers)
    except ValueError:
        raise ConfigError(f"{where}: unknown payload kind {kind!r}") from None


def _build_profile(rec: Any, idx: int, seed: int, scenario_duration: int,
                   where: str) -> AttackProfile:
    where = f"{where}: profiles[{idx}]"
    rec = _record(rec, where)
    _check_keys(rec, _PROFILE_KEYS, where)
    name = _field(rec, "name", (str,), where)
    kind = _field(rec, "kind", (str,), where)

    rate_rps = None
    if "rate_rps" in rec and "rate_per_hour" in rec:
        raise ConfigError(f"{where}: give rate_rps or rate_per_hour, not both")
    if "rate_rps" in rec:
        rate_rps = float(_field(rec, "rate_rps", (int, float), where))
    elif "rate_per_hour" in rec:
        rate_rps = float(_field(rec, "rate_per_hour", (int, float), where)) / 3600.0

    ramp = None
    if "ramp" in rec:
        ramp_rec = _record(rec["ramp"], f"{where}: ramp")
        _check_keys(ramp_rec, _RAMP_KEYS, f"{where}: ramp")
        ramp = RampSpec(
            initial_rate_rps=float(_field(ramp_rec, "initial_rate_rps",
                                          (int, float), f"{where}: ramp")),
            growth_per_window=float(_field(ramp_rec, "growth_per_window",
                                           (int, float), f"{where}: ramp")),
            window_ms=_field(ramp_rec, "window_ms", (int,), f"{where}: ramp"))

    start_ms = _field(rec, "start_ms", (int,), where, 0)
    duration_ms = _field(rec, "duration_ms", (int,), where,
                         scenario_duration - start_ms)
    if start_ms + duration_ms > scenario_duration:
        raise ConfigError(f"{where}: profile extends past the scenario duration")

    kwargs: dict[str, Any] = dict(
        name=name, kind=kind, duration_ms=duration_ms,
        seed=derive_seed(seed, 1, idx), rate_rps=rate_rps, ramp=ramp,
        start_ms=start_ms,
        node_count=_field(rec, "node_count", (int,), where, 1),
        ip_rotation_period_ms=_field(rec, "ip_rotation_period_ms", (int,),
                                     where, 0),
        target=_field(rec, "target", (str,), where, "function"))
    if "start_jitter_ms" in rec:
        kwargs["start_jitter_ms"] = _field(rec, "start_jitter_ms", (int,), where)
    if "payload" in rec:
        kwargs["payload"] = _build_payload(rec["payload"], f"{where}: payload")
    try:
        return AttackProfile(**kwargs)
    except ValueError as exc:  # unknown TrafficKind
        raise ConfigError(f"{where}: {exc}") from None


def _build_waf(rec: Any, where: str) -> WafPolicy:
    where = f"{where}: waf"
    rec = _record(rec, where)
    _check_keys(rec, _WAF_KEYS, where)
    mode = rec.get("mode")
    if not isinstance(mode, str):
        raise ConfigError(f"{where}: mode must be a quoted string "
                          "('off', 'static', or 'adaptive')")
    adaptive = None
    if "adaptive" in rec:
        arec = _record(rec["adaptive"], f"{where}: adaptive")
        _check_keys(arec, _ADAPTIVE_KEYS, f"{where}: adaptive")
        initial = arec.get("initial_baseline")
        adaptive = AdaptiveRule(
            ewma_alpha=float(_field(arec, "ewma_alpha", (int, float),
                                    f"{where}: adaptive")),
            threshold_multiplier=float(_field(arec, "threshold_multiplier",
                                              (int, float), f"{where}: adaptive")),
            initial_baseline=float(initial) if initial is not None else None)
    gateway = rec.get("gateway_hard_limit_rps")
    try:
        return WafPolicy(
            mode=mode,
            per_ip_limit=_field(rec, "per_ip_limit", (int,), where, None),
            window_ms=_field(rec, "window_ms", (int,), where, None),
            adaptive=adaptive,
            gateway_hard_limit_rps=float(gateway) if gateway is not None else None)
    except ValueError:
        raise ConfigError(f"{where}: unknown mode {mode!r}") from None


def _build_platform(rec: Any, where: str) -> PlatformSpec:
    where = f"{where}: platform"
    rec = _record(rec, where)
    _check_keys(rec, _PLATFORM_KEYS, where)
    kwargs: dict[str, Any] = {}
    for key in ("memory_mb", "max_replicas", "min_replicas",
                "scale_interval_ms", "billing_granularity_ms"):
        if key in rec:
            kwargs[key] = _field(rec, key, (int,), where)
    for key in ("per_replica_capacity_rps", "timeout_ms", "cold_start_ms"):
        if key in rec:
            kwargs[key] = float(_field(rec, key, (int, float), where))
    for key in ("memory_mb", "per_replica_capacity_rps", "max_replicas"):
        if key not in kwargs:
            raise ConfigError(f"{where}: missing required key {key!r}")
    return PlatformSpec(**kwargs)


def _build_curve(spec: Any, platform: PlatformSpec, where: str) -> RuntimeCurve:
    where = f"{where}: runtime_curve"
    if spec == "default":
        return RuntimeCurve(anchors=DEFAULT_ANCHORS,
                            timeout_ms=platform.timeout_ms)
    rec = _record(spec, where)
    _check_keys(rec, _CURVE_KEYS, where)
    raw = _field(rec, "anchors", (list,), where)
    anchors = []
    for pair in raw:
        if (not isinstance(pair, (list, tuple)) or len(pair) != 2
                or not all(isinstance(v, (int, float)) for v in pair)):
            raise ConfigError(f"{where}: anchors must be [size_px, runtime_ms] pairs")
        anchors.append((float(pair[0]), float(pair[1])))
    timeout = float(_field(rec, "timeout_ms", (int, float), where,
                           platform.timeout_ms))
    return RuntimeCurve(anchors=tuple(anchors), timeout_ms=timeout)


def _build_pricing(spec: Any, base_dir: Path, where: str) -> PricingConfig:
    if spec == "default":
        return default_pricing_config()
    if not isinstance(spec, str):
        raise ConfigError(f"{where}: pricing must be 'default' or a file path")
    path = Path(spec)
    if not path.is_absolute():
        path = base_dir / path
    if not path.exists():
        raise ConfigError(f"{where}: pricing file {path} does not exist")
    return load_pricing_config(path)


def build_scenario(doc: Any, base_dir: Path, where: str = "scenario") -> Scenario:
    doc = _record(doc, where)
    _check_keys(doc, _SCENARIO_KEYS, where)
    name = _field(doc, "name", (str,), where)
    seed = _field(doc, "seed", (int,), where)
    if seed < 0:
        raise ConfigError(f"{where}: seed must be >= 0")
    duration_ms = _field(doc, "duration_ms", (int,), where)
    if duration_ms < 1:
        raise ConfigError(f"{where}: duration_ms must be >= 1")
    extrapolation = _field(doc, "extrapolation_factor", (int,), where, 1)
    if extrapolation < 1:
        raise ConfigError(f"{where}: extrapolation_factor must be >= 1")
    jitter = float(_field(doc, "jitter_fraction", (int, float), where, 0.0))
    if not 0.0 <= jitter < 1.0:
        raise ConfigError(f"{where}: jitter_fraction must be in [0, 1)")

    raw_profiles = _field(doc, "profiles", (list,), where)
    if not raw_profiles:
        raise ConfigError(f"{where}: at least one profile is required")
    profiles = tuple(_build_profile(rec, i, seed, duration_ms, where)
                     for i, rec in enumerate(raw_profiles))
    names = [p.name for p in profiles]
    if len(set(names)) != len(names):
        raise ConfigError(f"{where}: profile names must be unique")

    platform = _build_platform(_field(doc, "platform", (dict,), where), where)
    waf = _build_waf(_field(doc, "waf", (dict,), where, {"mode": "off"}), where)
    curve = _build_curve(doc.get("runtime_curve", "default"), platform, where)
    pricing = _build_pricing(doc.get("pricing", "default"), base_dir, where)
    output_dir = _field(doc, "output_dir", (str,), where, None)

    return Scenario(name=name, seed=seed, duration_ms=duration_ms,
                    extrapolation_factor=extrapolation, jitter_fraction=jitter,
                    profiles=profiles, waf=waf, platform=platform, curve=curve,
                    pricing=pricing, output_dir=output_dir)


def load_raw_scenario(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"scenario file {path} does not exist")
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = f" line {mark.line + 1}:" if mark is not None else ""
        raise ConfigError(f"{path}:{line} {exc}") from None
    return _record(doc, str(path))


def apply_override(doc: dict, assignment: str) -> None:
    """Apply one PATH=VALUE override, e.g. profiles[0].rate_rps=40."""
    path, sep, raw = assignment.partition("=")
    if not sep or not path:
        raise ConfigError(f"override {assignment!r} is not PATH=VALUE")
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError:
        raise ConfigError(f"override {assignment!r} has an unparseable value") from None
    node: Any = doc
    segments = path.split(".")
    for pos, segment in enumerate(segments):
        m = _SEGMENT.match(segment)
        if not m:
            raise ConfigError(f"override path {path!r} is malformed at {segment!r}")
        key, index = m.group(1), m.group(2)
        last = pos == len(segments) - 1
        if not isinstance(node, dict):
            raise ConfigError(f"override path {path!r}: {key!r} has no parent mapping")
        if index is None:
            if last:
                node[key] = value
                return
            node = node.setdefault(key, {})
        else:
            if key not in node or not isinstance(node[key], list):
                raise ConfigError(f"override path {path!r}: {key!r} is not a list")
            seq = node[key]
            i = int(index)
            if i >= len(seq):
                raise ConfigError(f"override path {path!r}: index {i} out of range")
            if last:
                seq[i] = value
                return
            node = seq[i]


def read_override(doc: dict, path: str) -> Any:
    """Fetch the current value at an override path (for sweep validation)."""
    node: Any = doc
    for segment in path.split("."):
        m = _SEGMENT.match(segment)
        if not m:
            raise ConfigError(f"path {path!r} is malformed at {segment!r}")
        key, index = m.group(1), m.group(2)
        if not isinstance(node, dict) or key not in node:
            raise ConfigError(f"path {path!r}: no such field {key!r}")
        node = node[key]
        if index is not None:
            if not isinstance(node, list) or int(index) >= len(node):
                raise ConfigError(f"path {path!r}: index out of range")
            node = node[int(index)]
    return node


def load_scenario(path: str | Path,
                  overrides: Iterable[str] = ()) -> Scenario:
    path = Path(path)
    doc = load_raw_scenario(path)
    for assignment in overrides:
        apply_override(doc, assignment)
    return build_scenario(doc, path.parent.resolve(), where=str(path))


def bundled_scenario_path(name: str) -> Path:
    """Path of a scenario shipped with the package, by file name."""
    root = resources.files("dowsim").joinpath("data")
    path = Path(str(root.joinpath(name)))
    if not path.exists():
        raise ConfigError(f"no bundled scenario named {name!r}")
    return path
