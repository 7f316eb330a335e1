"""Figure rendering for experiment reports.

Renders PNG charts next to the CSV output: grouped makespan bars per node
count, weight/remaining-time error bars per strategy, and the per-task
estimation-error difference scatter. Only figures whose metrics are present
in the rows are produced.
"""

from __future__ import annotations

import statistics
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STRATEGY_ORDER = ("none", "naive", "late", "samr", "esamr", "nn")


def _strategy_sort(strategies) -> list[str]:
    order = {s: i for i, s in enumerate(STRATEGY_ORDER)}
    return sorted(strategies, key=lambda s: (order.get(s, len(order)), s))


def _mean(values: list[float]) -> float:
    return statistics.mean(values) if values else 0.0


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _makespan_figure(rows, out_dir: Path) -> Path:
    data = [r for r in rows if r.metric == "makespan_s"]
    inputs = sorted({r.input_bytes for r in data})
    node_counts = sorted({r.nodes for r in data})
    strategies = _strategy_sort({r.strategy for r in data})
    fig, axes = plt.subplots(
        1, len(inputs), figsize=(4.2 * len(inputs), 3.6), squeeze=False, sharey=False
    )
    width = 0.8 / max(1, len(strategies))
    for col, input_bytes in enumerate(inputs):
        ax = axes[0][col]
        for si, strategy in enumerate(strategies):
            xs, ys = [], []
            for ni, nodes in enumerate(node_counts):
                vals = [
                    r.value for r in data
                    if r.strategy == strategy and r.nodes == nodes and r.input_bytes == input_bytes
                ]
                if vals:
                    xs.append(ni + si * width)
                    ys.append(_mean(vals))
            ax.bar(xs, ys, width=width, label=strategy)
        ax.set_xticks([i + width * (len(strategies) - 1) / 2 for i in range(len(node_counts))])
        ax.set_xticklabels([str(n) for n in node_counts])
        ax.set_xlabel("nodes")
        ax.set_ylabel("mean makespan (s)")
        ax.set_title(f"input {input_bytes / 2**20:.0f} MiB")
    axes[0][0].legend(fontsize=8)
    return _save(fig, out_dir / "makespan.png")


def _error_bars_figure(rows, metric_prefix: str, title: str, filename: str, out_dir: Path) -> Path:
    phases = ("map", "reduce")
    strategies = _strategy_sort(
        {r.strategy for r in rows if r.metric.startswith(metric_prefix)}
    )
    fig, ax = plt.subplots(figsize=(5.4, 3.6))
    width = 0.8 / max(1, len(phases))
    for pi, phase in enumerate(phases):
        metric = f"{metric_prefix}_{phase}"
        ys = []
        for strategy in strategies:
            vals = [r.value for r in rows if r.metric == metric and r.strategy == strategy]
            ys.append(_mean(vals))
        xs = [i + pi * width for i in range(len(strategies))]
        ax.bar(xs, ys, width=width, label=phase)
    ax.set_xticks([i + width / 2 for i in range(len(strategies))])
    ax.set_xticklabels(strategies)
    ax.set_ylabel(title)
    ax.legend(fontsize=8)
    return _save(fig, out_dir / filename)


def _tte_diff_figure(task_rows, out_dir: Path) -> Path | None:
    """Per-task |error(esamr)| - |error(nn)|; positive points favor the networks."""
    by_key: dict[tuple, dict[str, float]] = {}
    for t in task_rows:
        if t.strategy not in ("esamr", "nn"):
            continue
        key = (t.workload, t.nodes, t.input_bytes, t.seed, t.phase, t.task_id)
        by_key.setdefault(key, {})[t.strategy] = abs(t.estimated_tte - t.realized_remaining)
    points: dict[str, list[float]] = {"map": [], "reduce": []}
    for key, errs in sorted(by_key.items()):
        if "esamr" in errs and "nn" in errs:
            points[key[4]].append(errs["esamr"] - errs["nn"])
    if not points["map"] and not points["reduce"]:
        return None
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    for phase, marker in (("map", "o"), ("reduce", "s")):
        ys = points[phase]
        ax.scatter(range(1, len(ys) + 1), ys, s=18, marker=marker, label=f"{phase} tasks")
    ax.axhline(0.0, linewidth=0.8)
    ax.set_xlabel("sampled task")
    ax.set_ylabel("|esamr error| - |nn error| (s)")
    ax.legend(fontsize=8)
    return _save(fig, out_dir / "tte_diff.png")


def render_figures(rows, out_dir: str | Path, task_rows=None) -> list[Path]:
    out_dir = Path(out_dir)
    out: list[Path] = []
    metrics = {r.metric for r in rows}
    if "makespan_s" in metrics:
        out.append(_makespan_figure(rows, out_dir))
    if any(m.startswith("weight_mse_") for m in metrics):
        out.append(
            _error_bars_figure(rows, "weight_mse", "weight MSE", "weight_mse.png", out_dir)
        )
    if any(m.startswith("tte_mae_") for m in metrics):
        out.append(
            _error_bars_figure(rows, "tte_mae", "remaining-time MAE (s)", "tte_mae.png", out_dir)
        )
    if task_rows:
        fig = _tte_diff_figure(task_rows, out_dir)
        if fig is not None:
            out.append(fig)
    return out
