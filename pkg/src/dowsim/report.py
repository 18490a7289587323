"""Damage accounting: turn one simulation into billed cost per month.

A run is sliced into 730 h billing months by arrival time; each month is
billed independently, so free tiers reset at the boundary. Attacker cost is
what the bill would shrink to if only traffic from profiles marked legit had
arrived, which charges the attacker for pushing usage past the free tiers.
All money stays in integer micro-units until rendering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path

import numpy as np

from .engine import SimulationResult, usage_totals
from .pricing import (MICROS_PER_UNIT, MONTH_MS, CostStatement, PricingConfig,
                      UsageTotals, compare_platforms, monthly_cost)
from .traffic import TrafficKind
from .waf import DISPOSITION_CODES

_REPORT_CSV_HEADER = ("month,platform,invocations,mean_runtime_ms,"
                      "request_cost,compute_cost,gateway_cost,total_cost,"
                      "attacker_cost,extrapolation_factor")
_COST_CSV_HEADER = ("platform,invocations,request_cost,compute_cost,"
                    "gateway_cost,total_cost")


@dataclass(frozen=True)
class MonthlyDamage:
    month: int
    usage: UsageTotals
    statements: tuple[CostStatement, ...]
    attacker_cost_micro: dict[str, int]


@dataclass(frozen=True)
class DamageReport:
    scenario_name: str
    extrapolation_factor: int
    admitted: int
    dropped: dict[str, int]
    months: tuple[MonthlyDamage, ...]
    totals: tuple[CostStatement, ...]
    attacker_cost_micro: dict[str, int]


def _sorted_statement_sums(months: list[MonthlyDamage]) -> tuple[CostStatement, ...]:
    acc: dict[str, list] = {}
    for month in months:
        for st in month.statements:
            row = acc.setdefault(st.platform_name, [0, 0, 0, 0, 0.0])
            row[0] += st.request_cost_micro
            row[1] += st.compute_cost_micro
            row[2] += st.gateway_cost_micro
            row[3] += st.billable_requests
            row[4] += st.billable_gb_seconds
    totals = [CostStatement(platform_name=name, request_cost_micro=row[0],
                            compute_cost_micro=row[1], gateway_cost_micro=row[2],
                            billable_requests=row[3], billable_gb_seconds=row[4])
              for name, row in acc.items()]
    totals.sort(key=lambda st: (-st.total_micro, st.platform_name))
    return tuple(totals)


def build_damage_report(result: SimulationResult, pricing: PricingConfig, *,
                        scenario_name: str, extrapolation_factor: int,
                        duration_ms: int) -> DamageReport:
    inv = result.invocations
    memory_mb = result.platform.memory_mb
    n_months = max(1, math.ceil(duration_ms / MONTH_MS))

    if len(inv):
        month_of = (inv.arrival_ms // MONTH_MS).astype(np.int64)
        legit_ref = np.array([ref.kind == TrafficKind.LEGIT
                              for ref in inv.profiles], dtype=bool)
        legit = legit_ref[inv.profile]
    else:
        month_of = np.zeros(0, dtype=np.int64)
        legit = np.zeros(0, dtype=bool)

    months: list[MonthlyDamage] = []
    for m in range(n_months):
        in_month = month_of == m
        usage = usage_totals(inv.subset(in_month), memory_mb)
        usage = usage.scaled(extrapolation_factor)
        statements = tuple(compare_platforms(usage, pricing.models))
        legit_usage = usage_totals(inv.subset(in_month & legit), memory_mb)
        legit_usage = legit_usage.scaled(extrapolation_factor)
        legit_micro = {model.platform_name:
                       monthly_cost(legit_usage, model).total_micro
                       for model in pricing.models}
        attacker = {st.platform_name: st.total_micro - legit_micro[st.platform_name]
                    for st in statements}
        months.append(MonthlyDamage(month=m + 1, usage=usage,
                                    statements=statements,
                                    attacker_cost_micro=attacker))

    totals = _sorted_statement_sums(months)
    attacker_totals = {st.platform_name:
                       sum(m.attacker_cost_micro[st.platform_name] for m in months)
                       for st in totals}
    counts = result.admissions.counts()
    dropped = {code.value: counts[code]
               for code in DISPOSITION_CODES if code != DISPOSITION_CODES[0]}
    return DamageReport(scenario_name=scenario_name,
                        extrapolation_factor=extrapolation_factor,
                        admitted=counts[DISPOSITION_CODES[0]], dropped=dropped,
                        months=tuple(months), totals=totals,
                        attacker_cost_micro=attacker_totals)


def _money(micro: int) -> str:
    return str(Decimal(micro) / MICROS_PER_UNIT)


def _mean_runtime_ms(usage: UsageTotals) -> float:
    if usage.invocation_count == 0:
        return 0.0
    return usage.cumulative_execution_ms / usage.invocation_count


def write_report_csv(report: DamageReport, path: str | Path) -> None:
    lines = [_REPORT_CSV_HEADER]
    for month in report.months:
        mean = _mean_runtime_ms(month.usage)
        for st in month.statements:
            lines.append(",".join((
                str(month.month), st.platform_name,
                str(month.usage.invocation_count), repr(mean),
                _money(st.request_cost_micro), _money(st.compute_cost_micro),
                _money(st.gateway_cost_micro), _money(st.total_micro),
                _money(month.attacker_cost_micro[st.platform_name]),
                str(report.extrapolation_factor))))
    Path(path).write_text("\n".join(lines) + "\n")


def _statement_table(statements, attacker: dict[str, int], pad: str) -> list[str]:
    lines = [f"{pad}{'platform':<10}{'requests':>14}{'compute':>16}"
             f"{'gateway':>14}{'total':>16}{'attacker':>16}"]
    for st in statements:
        lines.append(f"{pad}{st.platform_name:<10}"
                     f"{_money(st.request_cost_micro):>14}"
                     f"{_money(st.compute_cost_micro):>16}"
                     f"{_money(st.gateway_cost_micro):>14}"
                     f"{_money(st.total_micro):>16}"
                     f"{_money(attacker[st.platform_name]):>16}")
    return lines


def write_report_txt(report: DamageReport, path: str | Path) -> None:
    """Human-readable damage summary. Contains no timestamps by design."""
    lines = [f"damage report: {report.scenario_name}",
             f"extrapolation factor: {report.extrapolation_factor} "
             "(reported usage and costs are scaled by this factor)",
             f"admitted: {report.admitted}"]
    for label, count in report.dropped.items():
        lines.append(f"{label}: {count}")
    for month in report.months:
        lines.append("")
        mean = _mean_runtime_ms(month.usage)
        lines.append(f"month {month.month}: "
                     f"{month.usage.invocation_count} invocations, "
                     f"mean runtime {mean:.1f} ms at "
                     f"{month.usage.memory_mb} MB")
        lines.extend(_statement_table(month.statements,
                                      month.attacker_cost_micro, "  "))
    if len(report.months) > 1:
        lines.append("")
        lines.append("run totals")
        lines.extend(_statement_table(report.totals,
                                      report.attacker_cost_micro, "  "))
    Path(path).write_text("\n".join(lines) + "\n")


def write_cost_csv(usage: UsageTotals, statements, path: str | Path) -> None:
    lines = [_COST_CSV_HEADER]
    for st in statements:
        lines.append(",".join((
            st.platform_name, str(usage.invocation_count),
            _money(st.request_cost_micro), _money(st.compute_cost_micro),
            _money(st.gateway_cost_micro), _money(st.total_micro))))
    Path(path).write_text("\n".join(lines) + "\n")
