"""Billing emulation for function-as-a-service platforms.

Cost of a month of usage is request charges plus compute charges plus API
gateway charges. Compute is billed in GB-seconds: execution duration rounds
up to the platform's billing granularity, configured memory rounds up to the
platform's memory step, and monthly free allowances come off the top before
any money changes hands. All currency arithmetic happens in integer
micro-units (1e-6 of one currency unit), rounded half-up when a statement
line is produced, so totals are exact and reproducible.

Usage totals follow the counters a platform gateway actually exposes: an
invocation count and a cumulative execution time. Per-invocation durations
are assumed uniform at the mean, which matches how those two counters get
turned back into a bill.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from importlib import resources
from pathlib import Path

import yaml

from .errors import ConfigError, MetricsParseError

MICROS_PER_UNIT = 1_000_000

# Billing month: 730 hours (24 * 365 / 12). Free tiers reset on this boundary.
MONTH_HOURS = 730
MONTH_MS = MONTH_HOURS * 3_600_000

INVOCATION_FAMILY = "gateway_function_invocation_total"
SECONDS_FAMILY = "gateway_functions_seconds_sum"

_METRIC_LINE = re.compile(
    r"^([A-Za-z_:][A-Za-z0-9_:]*)(\{[^{}]*\})?[ \t]+(\S+)$"
)

_MODEL_FIELDS = {
    "platform_name",
    "per_million_requests",
    "per_gb_second",
    "billing_granularity_ms",
    "free_requests_per_month",
    "free_gb_seconds_per_month",
    "gateway_per_million_requests",
    "min_billable_memory_mb",
}


def _half_up(amount: float) -> int:
    return int(math.floor(amount + 0.5))


@dataclass(frozen=True)
class PricingModel:
    """One platform's published price points."""

    platform_name: str
    per_million_requests: float
    per_gb_second: float
    billing_granularity_ms: int
    free_requests_per_month: int
    free_gb_seconds_per_month: float
    gateway_per_million_requests: float
    min_billable_memory_mb: int

    def __post_init__(self) -> None:
        if not self.platform_name:
            raise ConfigError("pricing model needs a platform_name")
        for field in ("per_million_requests", "per_gb_second",
                      "gateway_per_million_requests"):
            if getattr(self, field) < 0:
                raise ConfigError(f"{self.platform_name}: {field} must be >= 0")
        if self.billing_granularity_ms < 1:
            raise ConfigError(f"{self.platform_name}: billing_granularity_ms must be >= 1")
        if self.min_billable_memory_mb < 1:
            raise ConfigError(f"{self.platform_name}: min_billable_memory_mb must be >= 1")
        if self.free_requests_per_month < 0 or self.free_gb_seconds_per_month < 0:
            raise ConfigError(f"{self.platform_name}: free allowances must be >= 0")


@dataclass(frozen=True)
class UsageTotals:
    """Aggregate counters for one billing month of one function fleet."""

    invocation_count: int
    cumulative_execution_ms: float
    memory_mb: int

    def __post_init__(self) -> None:
        if self.invocation_count < 0:
            raise ValueError("invocation_count must be >= 0")
        if self.cumulative_execution_ms < 0:
            raise ValueError("cumulative_execution_ms must be >= 0")
        if self.invocation_count == 0 and self.cumulative_execution_ms != 0:
            raise ValueError("zero invocations cannot have execution time")
        if self.memory_mb < 1:
            raise ValueError("memory_mb must be >= 1")

    def scaled(self, factor: int) -> "UsageTotals":
        """Linear extrapolation: factor x the nodes means factor x the usage."""
        if factor < 1:
            raise ValueError("extrapolation factor must be >= 1")
        return UsageTotals(
            self.invocation_count * factor,
            self.cumulative_execution_ms * factor,
            self.memory_mb,
        )


@dataclass(frozen=True)
class CostStatement:
    """One platform's bill for one month, in integer micro-units."""

    platform_name: str
    request_cost_micro: int
    compute_cost_micro: int
    gateway_cost_micro: int
    billable_requests: int
    billable_gb_seconds: float

    @property
    def total_micro(self) -> int:
        return self.request_cost_micro + self.compute_cost_micro + self.gateway_cost_micro

    @property
    def request_cost(self) -> float:
        return self.request_cost_micro / MICROS_PER_UNIT

    @property
    def compute_cost(self) -> float:
        return self.compute_cost_micro / MICROS_PER_UNIT

    @property
    def gateway_cost(self) -> float:
        return self.gateway_cost_micro / MICROS_PER_UNIT

    @property
    def total(self) -> float:
        return self.total_micro / MICROS_PER_UNIT


@dataclass(frozen=True)
class PricingConfig:
    captured_date: str
    models: tuple[PricingModel, ...]


def billed_duration_ms(actual_ms: float, granularity_ms: int) -> int:
    """Round a duration up to the granularity; zero still bills one unit."""
    if granularity_ms < 1:
        raise ConfigError("billing granularity must be >= 1 ms")
    if actual_ms < 0:
        raise ValueError("duration must be >= 0")
    units = max(1, math.ceil(actual_ms / granularity_ms))
    return units * granularity_ms


def rounded_memory_mb(memory_mb: int, min_billable_memory_mb: int) -> int:
    if min_billable_memory_mb < 1:
        raise ConfigError("memory step must be >= 1 MB")
    if memory_mb < 1:
        raise ValueError("memory_mb must be >= 1")
    return math.ceil(memory_mb / min_billable_memory_mb) * min_billable_memory_mb


def gb_seconds(billed_ms: int, memory_mb: int, min_billable_memory_mb: int) -> float:
    """GB-seconds billed for one invocation of the given billed duration."""
    mem = rounded_memory_mb(memory_mb, min_billable_memory_mb)
    return (billed_ms / 1000.0) * (mem / 1024.0)


def monthly_cost(usage: UsageTotals, model: PricingModel) -> CostStatement:
    """Price one month of usage against one platform's model."""
    if usage.invocation_count > 0:
        mean_ms = usage.cumulative_execution_ms / usage.invocation_count
        billed = billed_duration_ms(mean_ms, model.billing_granularity_ms)
        per_invocation = gb_seconds(billed, usage.memory_mb, model.min_billable_memory_mb)
        total_gb_seconds = usage.invocation_count * per_invocation
    else:
        total_gb_seconds = 0.0

    billable_requests = max(0, usage.invocation_count - model.free_requests_per_month)
    billable_gb_seconds = max(0.0, total_gb_seconds - model.free_gb_seconds_per_month)

    # A per-million rate is exactly a micro-unit rate per single request.
    return CostStatement(
        platform_name=model.platform_name,
        request_cost_micro=_half_up(billable_requests * model.per_million_requests),
        compute_cost_micro=_half_up(
            billable_gb_seconds * model.per_gb_second * MICROS_PER_UNIT),
        gateway_cost_micro=_half_up(
            usage.invocation_count * model.gateway_per_million_requests),
        billable_requests=billable_requests,
        billable_gb_seconds=billable_gb_seconds,
    )


def compare_platforms(usage: UsageTotals, models) -> list[CostStatement]:
    """Statements for every model, most expensive first, name breaking ties."""
    models = list(models)
    if not models:
        raise ValueError("no pricing models to compare")
    statements = [monthly_cost(usage, m) for m in models]
    statements.sort(key=lambda st: (-st.total_micro, st.platform_name))
    return statements


def parse_usage_metrics(metrics_text: str, memory_mb: int) -> UsageTotals:
    """Read usage totals out of gateway metrics in text exposition format.

    Accepts ``name{labels} value`` and ``name value`` sample lines plus
    ``#`` comments. Samples of the same family are summed across label sets.
    The execution-time family carries seconds; totals come back in ms. The
    seconds value is rescaled with decimal arithmetic so that a value our own
    exporter wrote round-trips bit-exactly.
    """
    sums: dict[str, Decimal] = {INVOCATION_FAMILY: Decimal(0), SECONDS_FAMILY: Decimal(0)}
    seen: set[str] = set()
    for line_no, raw in enumerate(metrics_text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        match = _METRIC_LINE.match(line)
        if match is None:
            raise MetricsParseError(f"line {line_no}: unparseable sample {raw!r}")
        name, _labels, token = match.groups()
        if name not in sums:
            continue
        try:
            value = Decimal(token)
        except InvalidOperation:
            raise MetricsParseError(f"line {line_no}: bad sample value {token!r}") from None
        if not value.is_finite() or value < 0:
            raise MetricsParseError(f"line {line_no}: bad sample value {token!r}")
        sums[name] += value
        seen.add(name)

    for family in (INVOCATION_FAMILY, SECONDS_FAMILY):
        if family not in seen:
            raise MetricsParseError(f"metrics text is missing family {family!r}")

    count = int(sums[INVOCATION_FAMILY].to_integral_value(rounding="ROUND_HALF_UP"))
    cumulative_ms = float(sums[SECONDS_FAMILY] * 1000)
    try:
        return UsageTotals(count, cumulative_ms, memory_mb)
    except ValueError as exc:
        raise MetricsParseError(f"inconsistent usage totals: {exc}") from exc


def _required(record: dict, key: str, kinds, where: str):
    if key not in record:
        raise ConfigError(f"{where}: missing key {key!r}")
    value = record[key]
    if isinstance(value, bool) or not isinstance(value, kinds):
        raise ConfigError(f"{where}: key {key!r} has the wrong type")
    return value


def _parse_pricing(doc, where: str) -> PricingConfig:
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: pricing config must be a mapping")
    extras = set(doc) - {"captured_date", "platforms"}
    if extras:
        raise ConfigError(f"{where}: unknown keys {sorted(extras)}")
    if "captured_date" not in doc:
        raise ConfigError(f"{where}: missing captured_date header")
    captured = str(doc["captured_date"])
    platforms = doc.get("platforms")
    if not isinstance(platforms, list) or not platforms:
        raise ConfigError(f"{where}: platforms must be a non-empty list")

    models = []
    names: set[str] = set()
    for record in platforms:
        if not isinstance(record, dict):
            raise ConfigError(f"{where}: each platform must be a mapping")
        extras = set(record) - _MODEL_FIELDS
        if extras:
            raise ConfigError(f"{where}: unknown pricing keys {sorted(extras)}")
        name = _required(record, "platform_name", str, where)
        if name in names:
            raise ConfigError(f"{where}: duplicate platform {name!r}")
        names.add(name)
        models.append(PricingModel(
            platform_name=name,
            per_million_requests=float(_required(record, "per_million_requests", (int, float), where)),
            per_gb_second=float(_required(record, "per_gb_second", (int, float), where)),
            billing_granularity_ms=_required(record, "billing_granularity_ms", int, where),
            free_requests_per_month=_required(record, "free_requests_per_month", int, where),
            free_gb_seconds_per_month=float(_required(record, "free_gb_seconds_per_month", (int, float), where)),
            gateway_per_million_requests=float(_required(record, "gateway_per_million_requests", (int, float), where)),
            min_billable_memory_mb=_required(record, "min_billable_memory_mb", int, where),
        ))
    return PricingConfig(captured_date=captured, models=tuple(models))


def load_pricing_config(path: str | Path) -> PricingConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"pricing config not found: {path}")
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return _parse_pricing(doc, str(path))


def default_pricing_config() -> PricingConfig:
    """The bundled price capture (see data/pricing.yaml for provenance)."""
    text = resources.files("dowsim").joinpath("data/pricing.yaml").read_text()
    return _parse_pricing(yaml.safe_load(text), "bundled pricing.yaml")
