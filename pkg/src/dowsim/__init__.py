"""dowsim: a deterministic denial-of-wallet attack simulator.

Attack traffic generators feed a WAF admission layer, admitted requests run
on an autoscaling function platform model, and the resulting usage counters
are priced against captured public price lists for the major FaaS providers.
"""

from .config import Scenario, derive_seed, load_scenario
from .engine import (
    InvocationLog,
    MetricsSeries,
    PlatformSpec,
    SimulationResult,
    export_usage_metrics,
    run,
    usage_totals,
    write_metrics_csv,
)
from .errors import ConfigError, MetricsParseError, SimulationError, StreamOrderError
from .pipeline import ScenarioRun, simulate_scenario
from .pricing import (
    CostStatement,
    PricingConfig,
    PricingModel,
    UsageTotals,
    billed_duration_ms,
    compare_platforms,
    default_pricing_config,
    gb_seconds,
    load_pricing_config,
    monthly_cost,
    parse_usage_metrics,
)
from .report import DamageReport, MonthlyDamage, build_damage_report
from .runtime import PayloadSpec, RuntimeCurve, runtime_for_input, sample_runtime
from .traffic import AttackProfile, EventStream, RampSpec, generate, merge, write_events_csv
from .waf import AdaptiveRule, AdmissionLog, WafPolicy, admit, baseline_trace

__version__ = "0.1.0"
