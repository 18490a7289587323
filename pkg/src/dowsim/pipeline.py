"""One-call pipeline: scenario in, priced damage out.

Wires the stages in their only sensible order: realize each traffic profile,
merge the streams on the shared clock, run admission control, execute the
admitted events on the platform model, and bill the resulting usage.
"""

from __future__ import annotations

from dataclasses import dataclass

from .config import Scenario
from .engine import SimulationResult, run
from .report import DamageReport, build_damage_report
from .traffic import EventStream, generate, merge
from .waf import admit


@dataclass(frozen=True)
class ScenarioRun:
    scenario: Scenario
    stream: EventStream
    result: SimulationResult
    report: DamageReport


def simulate_scenario(scenario: Scenario) -> ScenarioRun:
    stream = merge([generate(profile) for profile in scenario.profiles])
    admissions = admit(stream, scenario.waf)
    result = run(admissions, scenario.platform, scenario.curve,
                 scenario.engine_seed, duration_ms=scenario.duration_ms,
                 jitter_fraction=scenario.jitter_fraction)
    report = build_damage_report(
        result, scenario.pricing, scenario_name=scenario.name,
        extrapolation_factor=scenario.extrapolation_factor,
        duration_ms=scenario.duration_ms)
    return ScenarioRun(scenario=scenario, stream=stream, result=result,
                       report=report)
