"""Command line front end: simulate, cost, sweep."""

from __future__ import annotations

import argparse
import copy
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from decimal import Decimal
from pathlib import Path

import yaml

from .config import (apply_override, build_scenario, bundled_scenario_path,
                     load_raw_scenario, read_override)
from .engine import export_usage_metrics, write_metrics_csv
from .errors import ConfigError, SimulationError
from .figures import render_run_figures, render_sweep_figure
from .pipeline import ScenarioRun, simulate_scenario
from .pricing import (MICROS_PER_UNIT, compare_platforms,
                      default_pricing_config, load_pricing_config,
                      parse_usage_metrics)
from .report import write_cost_csv, write_report_csv, write_report_txt
from .traffic import write_events_csv


def _money(micro: int) -> str:
    return str(Decimal(micro) / MICROS_PER_UNIT)


def _write_atomic(path: Path, writer) -> None:
    # same-directory temp name so os.replace stays a single-filesystem rename
    tmp = path.with_name(path.name + ".tmp")
    writer(tmp)
    os.replace(tmp, path)


def _resolve_scenario(token: str) -> Path:
    path = Path(token)
    if path.exists():
        return path
    try:
        return bundled_scenario_path(token)
    except ConfigError:
        raise ConfigError(f"scenario file {token} does not exist") from None


def _load(args) -> tuple[dict, Path]:
    path = _resolve_scenario(args.scenario)
    doc = load_raw_scenario(path)
    for assignment in args.set or ():
        apply_override(doc, assignment)
    return doc, path.parent.resolve()


def _write_run_outputs(run: ScenarioRun, out_dir: Path, *,
                       events: bool, figures: bool) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    if events:
        labels = run.result.admissions.labels()
        _write_atomic(out_dir / "events.csv",
                      lambda p: write_events_csv(run.stream, p, labels))
    _write_atomic(out_dir / "metrics.csv",
                  lambda p: write_metrics_csv(run.result.metrics, p))
    _write_atomic(out_dir / "metrics.prom",
                  lambda p: export_usage_metrics(run.result.invocations, p))
    _write_atomic(out_dir / "report.csv",
                  lambda p: write_report_csv(run.report, p))
    _write_atomic(out_dir / "report.txt",
                  lambda p: write_report_txt(run.report, p))
    if figures:
        render_run_figures(run, out_dir / "figures")


def _cmd_simulate(args) -> int:
    doc, base_dir = _load(args)
    scenario = build_scenario(doc, base_dir)
    if args.seed is not None:
        scenario = scenario.with_seed(args.seed)
    out_dir = Path(args.out or scenario.output_dir or f"{scenario.name}-out")
    run = simulate_scenario(scenario)
    _write_run_outputs(run, out_dir, events=not args.no_events,
                       figures=not args.no_figures)
    sys.stdout.write((out_dir / "report.txt").read_text())
    print(f"outputs written to {out_dir}")
    return 0


def _cmd_cost(args) -> int:
    metrics_path = Path(args.metrics)
    if not metrics_path.exists():
        raise ConfigError(f"metrics file {metrics_path} does not exist")
    if args.pricing == "default":
        pricing = default_pricing_config()
    else:
        pricing = load_pricing_config(args.pricing)
    usage = parse_usage_metrics(metrics_path.read_text(), args.memory_mb)
    statements = compare_platforms(usage, pricing.models)

    print(f"{'platform':<10}{'invocations':>14}{'requests':>14}"
          f"{'compute':>16}{'gateway':>14}{'total':>16}")
    for st in statements:
        print(f"{st.platform_name:<10}{usage.invocation_count:>14}"
              f"{_money(st.request_cost_micro):>14}"
              f"{_money(st.compute_cost_micro):>16}"
              f"{_money(st.gateway_cost_micro):>14}"
              f"{_money(st.total_micro):>16}")

    out_dir = Path(args.out) if args.out else metrics_path.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_atomic(out_dir / "cost.csv",
                  lambda p: write_cost_csv(usage, statements, p))
    return 0


def _parse_vary(spec: str, doc: dict) -> tuple[str, list[str]]:
    field, sep, raw = spec.partition("=")
    if not sep or not field or not raw:
        raise ConfigError(f"--vary {spec!r} is not FIELD=v1,v2,...")
    current = read_override(doc, field)
    if isinstance(current, bool) or not isinstance(current, (int, float)):
        raise ConfigError(f"sweep target {field!r} is not a numeric field")
    tokens = [t.strip() for t in raw.split(",")]
    for token in tokens:
        value = yaml.safe_load(token)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"sweep value {token!r} is not numeric")
    return field, tokens


def _sweep_point(doc: dict, base_dir: str, field: str, token: str,
                 seed: int) -> list[tuple[str, int, str, int, str, str]]:
    """One isolated pipeline run; returns sweep.csv rows for this value."""
    point_doc = copy.deepcopy(doc)
    apply_override(point_doc, f"{field}={token}")
    scenario = build_scenario(point_doc, Path(base_dir)).with_seed(seed)
    run = simulate_scenario(scenario)
    rows = []
    for month in run.report.months:
        for st in month.statements:
            rows.append((token, month.month, st.platform_name,
                         month.usage.invocation_count, _money(st.total_micro),
                         _money(month.attacker_cost_micro[st.platform_name])))
    return rows


def _write_sweep_rows(rows, path: Path) -> None:
    lines = ["value,month,platform,invocations,total_cost,attacker_cost"]
    lines.extend(",".join(str(col) for col in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")


def _cmd_sweep(args) -> int:
    doc, base_dir = _load(args)
    field, tokens = _parse_vary(args.vary, doc)
    base = build_scenario(copy.deepcopy(doc), base_dir)
    out_dir = Path(args.out or f"{base.name}-sweep")
    points_dir = out_dir / "points"
    points_dir.mkdir(parents=True, exist_ok=True)

    jobs = [(doc, str(base_dir), field, token, base.seed + j)
            for j, token in enumerate(tokens)]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [pool.submit(_sweep_point, *job) for job in jobs]
            results = [f.result() for f in futures]
    else:
        results = [_sweep_point(*job) for job in jobs]

    all_rows = []
    for j, rows in enumerate(results):
        _write_atomic(points_dir / f"point-{j:03d}.csv",
                      lambda p, rows=rows: _write_sweep_rows(rows, p))
        all_rows.extend(rows)
    _write_atomic(out_dir / "sweep.csv",
                  lambda p: _write_sweep_rows(all_rows, p))

    if not args.no_figures:
        totals: dict[tuple[str, str], float] = {}
        for token, _month, name, _count, total, _attacker in all_rows:
            key = (token, name)
            totals[key] = totals.get(key, 0.0) + float(total)
        render_sweep_figure(field, [(float(yaml.safe_load(token)), name, t)
                                    for (token, name), t in totals.items()],
                            out_dir)
    print(f"{len(tokens)} sweep points written to {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dowsim",
        description="Simulate denial-of-wallet attacks on a serverless "
                    "platform and bill the damage.")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one scenario end to end")
    sim.add_argument("scenario", help="scenario file path or bundled name")
    sim.add_argument("--seed", type=int, default=None,
                     help="override the scenario seed")
    sim.add_argument("--out", default=None, help="output directory")
    sim.add_argument("--jobs", type=int, default=1,
                     help="worker bound (a single scenario uses one)")
    sim.add_argument("--set", action="append", metavar="PATH=VALUE",
                     help="override a scenario field, repeatable")
    sim.add_argument("--no-events", action="store_true",
                     help="skip the per-event CSV")
    sim.add_argument("--no-figures", action="store_true",
                     help="skip PNG rendering")
    sim.set_defaults(func=_cmd_simulate)

    cost = sub.add_parser("cost", help="bill a gateway metrics snapshot")
    cost.add_argument("--metrics", required=True,
                      help="gateway metrics text file")
    cost.add_argument("--pricing", default="default",
                      help="pricing config path, or 'default'")
    cost.add_argument("--memory-mb", type=int, required=True,
                      help="allocated function memory")
    cost.add_argument("--out", default=None,
                      help="directory for cost.csv (default: metrics dir)")
    cost.set_defaults(func=_cmd_cost)

    sweep = sub.add_parser("sweep", help="run a scenario across a value list")
    sweep.add_argument("scenario", help="scenario file path or bundled name")
    sweep.add_argument("--vary", required=True, metavar="FIELD=v1,v2,...",
                       help="numeric scenario field and the values to sweep")
    sweep.add_argument("--jobs", type=int, default=1,
                       help="parallel sweep points")
    sweep.add_argument("--out", default=None, help="output directory")
    sweep.add_argument("--set", action="append", metavar="PATH=VALUE",
                       help="override a scenario field, repeatable")
    sweep.add_argument("--no-figures", action="store_true",
                       help="skip PNG rendering")
    sweep.set_defaults(func=_cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SimulationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
