"""PNG rendering of run and sweep outputs, written next to the CSV files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .pipeline import ScenarioRun


def _time_axis(bucket_start_ms: np.ndarray) -> tuple[np.ndarray, str]:
    span_ms = float(bucket_start_ms[-1]) if bucket_start_ms.size else 0.0
    if span_ms > 3 * 3_600_000:
        return bucket_start_ms / 3_600_000.0, "time (h)"
    if span_ms > 600_000:
        return bucket_start_ms / 60_000.0, "time (min)"
    return bucket_start_ms / 1_000.0, "time (s)"


def _line_figure(path: Path, t: np.ndarray, xlabel: str, series, ylabel: str,
                 step: bool = False) -> None:
    fig, ax = plt.subplots(figsize=(8.0, 4.5), dpi=120)
    for values, label, color in series:
        if step:
            ax.step(t, values, where="post", label=label, color=color)
        else:
            ax.plot(t, values, label=label, color=color)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    if len(series) > 1:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def render_run_figures(run: ScenarioRun, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    m = run.result.metrics
    t, xlabel = _time_axis(m.bucket_start_ms)
    per_s = m.bucket_ms / 1_000.0
    written: list[Path] = []

    dropped = (m.dropped_rate_limit + m.dropped_adaptive
               + m.dropped_gateway_limit)
    rate_series = [(m.invocations / per_s, "admitted", "tab:blue")]
    if dropped.any():
        rate_series.append((dropped / per_s, "dropped", "tab:red"))
    for name, series, ylabel, step in (
            ("request_rate.png", rate_series, "requests per second", False),
            ("mean_runtime.png",
             [(m.mean_runtime_ms, "mean runtime", "tab:purple")],
             "mean runtime (ms)", False),
            ("replicas.png", [(m.replicas, "replicas", "tab:green")],
             "replicas", True),
            ("queue_depth.png", [(m.queue_depth, "queued", "tab:orange")],
             "queued invocations", False)):
        path = out / name
        _line_figure(path, t, xlabel, series, ylabel, step=step)
        written.append(path)

    path = out / "cost_by_platform.png"
    totals = run.report.totals
    names = [st.platform_name for st in totals]
    x = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(8.0, 4.5), dpi=120)
    ax.bar(x - 0.2, [st.total for st in totals], width=0.4,
           label="total", color="tab:blue")
    ax.bar(x + 0.2, [run.report.attacker_cost_micro[n] / 1e6 for n in names],
           width=0.4, label="attacker share", color="tab:red")
    ax.set_xticks(x, names)
    ax.set_ylabel("monthly bill (USD)")
    ax.set_title(f"extrapolation factor {run.report.extrapolation_factor}")
    ax.grid(True, axis="y", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    written.append(path)
    return written


def render_sweep_figure(field: str, rows, out_dir: str | Path) -> Path:
    """Total cost per platform against the swept value.

    rows: (value, platform_name, total_dollars) with months already summed.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    by_platform: dict[str, list[tuple[float, float]]] = {}
    for value, name, total in rows:
        by_platform.setdefault(name, []).append((float(value), total))

    fig, ax = plt.subplots(figsize=(8.0, 4.5), dpi=120)
    for name, points in by_platform.items():
        points.sort()
        ax.plot([p[0] for p in points], [p[1] for p in points],
                marker="o", label=name)
    ax.set_xlabel(field)
    ax.set_ylabel("total bill (USD)")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    path = out / "sweep_cost.png"
    fig.savefig(path)
    plt.close(fig)
    return path
