"""Benchmark harness: canned experiments over the simulator, CSV + summary output.

Four experiment kinds share one grid of (node count, input size, seed) cells.
Every cell first runs a warm-up batch of no-speculation jobs to populate the
history store, and trains the neural estimator on that history when the neural
strategy participates:

* ``weights``  - predict each completed task's stage weights with every
  strategy and score them against the realized weights (squared error).
* ``tte``      - replay a finished no-speculation run and, for each sampled
  task at 50% of its life, score each strategy's remaining-time estimate
  against the exactly-known remaining time.
* ``makespan`` - run every strategy on the same cell and record makespan,
  backup decision count, and cancelled work.
* ``sweep``    - alias for ``makespan`` (the node/input grid is the point).

Improvement percentages against the no-speculation and LATE baselines appear
in the plain-text summary, computed as (baseline - method) / baseline * 100;
positive means the method is faster. They are not emitted as metric rows
because they can be negative while metric rows are sign-checked.
"""

from __future__ import annotations

import csv
import math
import statistics
from dataclasses import dataclass, replace
from pathlib import Path

from .errors import ConfigurationError, DegenerateInputError
from .history import HistoryStore
from .learners.estimator import (
    NnEstimator,
    predict_reduce_weights,
    train_estimator,
)
from .learners.mlp import TrainConfig
from .progress import mse_error
from .simulator import (
    ClusterConfig,
    SimResult,
    Workload,
    run_simulation,
    snapshot_from_attempt,
)
from .strategies import (
    CONSTANT_WEIGHTS,
    ClusterView,
    StrategyKind,
    StrategyParams,
    WeightResolver,
    estimate_tasks,
)
from .taskmodel import ExecutionRecord, NodeSpec, Phase

MIB = 2**20
GIB = 2**30

METRIC_NAMES = (
    "weight_mse",
    "tte_mae",
    "tte_mse",
    "makespan_s",
    "decisions",
    "cancelled_work_s",
)

CSV_HEADER = "strategy,workload,nodes,input_bytes,seed,metric,value"
TASK_CSV_HEADER = (
    "strategy,workload,nodes,input_bytes,seed,phase,task_id,estimated_tte,realized_remaining"
)

EXPERIMENT_KINDS = ("weights", "tte", "makespan", "sweep")

# strategies that read history or models and therefore need the warm-up
LEARNED_KINDS = (StrategyKind.SAMR, StrategyKind.ESAMR, StrategyKind.NN)


@dataclass(frozen=True)
class MetricsRow:
    """One scalar result cell; the CSV row unit."""

    strategy: str
    workload: str
    nodes: int
    input_bytes: int
    seed: int
    metric: str
    value: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.value) or self.value < 0:
            raise ValueError(f"metric {self.metric} must be finite and >= 0: {self.value}")

    def key(self) -> tuple:
        return (self.strategy, self.workload, self.nodes, self.input_bytes, self.seed, self.metric)


@dataclass(frozen=True)
class TteTaskRow:
    """One sampled task's remaining-time estimate under one strategy."""

    strategy: str
    workload: str
    nodes: int
    input_bytes: int
    seed: int
    phase: str
    task_id: str
    estimated_tte: float
    realized_remaining: float

    def key(self) -> tuple:
        return (
            self.strategy,
            self.workload,
            self.nodes,
            self.input_bytes,
            self.seed,
            self.phase,
            self.task_id,
        )


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything one experiment invocation sweeps over."""

    experiment: str
    strategies: tuple[StrategyKind, ...] = (
        StrategyKind.NO_SPECULATE,
        StrategyKind.NAIVE,
        StrategyKind.LATE,
        StrategyKind.SAMR,
        StrategyKind.ESAMR,
        StrategyKind.NN,
    )
    node_counts: tuple[int, ...] = (2, 3, 4)
    input_sizes: tuple[int, ...] = (256 * MIB, GIB, 4 * GIB)
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    repetitions: int = 1
    workload: Workload = Workload.SORT
    containers: int = 2
    reduce_per_node: int = 1
    warmups: int = 10
    tasks_per_phase: int = 20
    noise: float = 0.1
    straggler_fraction: float = 0.25
    straggler_multiplier: float = 0.3
    two_regime: bool = False
    params: StrategyParams = StrategyParams(min_elapsed=5.0)
    train: TrainConfig = TrainConfig()

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENT_KINDS:
            raise ConfigurationError(
                f"experiment must be one of {', '.join(EXPERIMENT_KINDS)}: {self.experiment!r}"
            )
        if self.repetitions < 1:
            raise ConfigurationError("repetitions must be >= 1")
        if not self.strategies or not self.node_counts or not self.input_sizes or not self.seeds:
            raise ConfigurationError("strategy, node, input, and seed sweeps must be non-empty")
        if any(n < 1 for n in self.node_counts):
            raise ConfigurationError("node counts must be >= 1")
        if any(b <= 0 for b in self.input_sizes):
            raise ConfigurationError("input sizes must be > 0")
        if self.warmups < 0:
            raise ConfigurationError("warmups must be >= 0")
        if self.tasks_per_phase < 1:
            raise ConfigurationError("tasks_per_phase must be >= 1")
        if self.reduce_per_node < 1:
            raise ConfigurationError("reduce_per_node must be >= 1")

    def effective_seeds(self) -> tuple[int, ...]:
        """The seed sweep repeated ``repetitions`` times at disjoint offsets."""
        return tuple(s + 100_000 * r for r in range(self.repetitions) for s in self.seeds)


def default_spec(kind: str, **overrides) -> ExperimentSpec:
    """Sensible per-kind defaults: estimation experiments run on the two-regime
    cluster with multi-wave reduces; makespan sweeps the straggler cluster."""
    base: dict = {"experiment": kind}
    if kind in ("weights", "tte"):
        base.update(
            strategies=(
                StrategyKind.LATE,
                StrategyKind.SAMR,
                StrategyKind.ESAMR,
                StrategyKind.NN,
            ),
            node_counts=(4,),
            input_sizes=(4 * GIB,),
            reduce_per_node=5,
            two_regime=True,
            straggler_fraction=0.0,
            straggler_multiplier=1.0,
        )
    base.update(overrides)
    return ExperimentSpec(**base)


def two_regime_cluster(n: int = 4, containers: int = 2) -> tuple[NodeSpec, ...]:
    """Alternating shuffle-fast and sort-fast nodes with within-regime variation.

    Even nodes run shuffle ~2x and sort ~0.5x nominal; odd nodes the opposite.
    Later nodes of each regime get a further ~10% tilt, so per-node stage
    weights differ even inside one regime.
    """
    if n < 1:
        raise ConfigurationError("cluster needs at least one node")
    nodes = []
    for i in range(n):
        tilt = 1.0 + 0.10 * (i // 2)
        if i % 2 == 0:
            shuffle, sort = 2.0 * tilt, 0.5 / tilt
        else:
            shuffle, sort = 0.5 / tilt, 2.0 * tilt
        nodes.append(NodeSpec(f"n{i:02d}", (1.0, 1.0, shuffle, sort, 1.0), containers))
    return tuple(nodes)


def _cell_config(spec: ExperimentSpec, n_nodes: int, input_bytes: int, seed: int) -> ClusterConfig:
    if spec.two_regime:
        nodes = two_regime_cluster(n_nodes, spec.containers)
        fraction, multiplier = 0.0, 1.0
    else:
        nodes = tuple(
            NodeSpec.uniform(f"n{i:02d}", 1.0, spec.containers) for i in range(n_nodes)
        )
        fraction, multiplier = spec.straggler_fraction, spec.straggler_multiplier
    return ClusterConfig(
        nodes=nodes,
        workload=spec.workload,
        input_bytes=input_bytes,
        noise=spec.noise,
        straggler_fraction=fraction,
        straggler_multiplier=multiplier,
        seed=seed,
        reduce_tasks=spec.reduce_per_node * n_nodes,
    )


def _warm_history(spec: ExperimentSpec, config: ClusterConfig, seed: int) -> HistoryStore:
    """Populate a fresh store with no-speculation warm-up jobs on this cell."""
    hist = HistoryStore()
    for i in range(spec.warmups):
        warm_cfg = replace(config, seed=7_000_000 + seed * 1_000 + i)
        run_simulation(warm_cfg, StrategyKind.NO_SPECULATE, spec.params, history=hist,
                       job_id=f"warm{i:02d}")
    needs_history = any(k in LEARNED_KINDS for k in spec.strategies)
    if needs_history and len(hist) == 0:
        raise DegenerateInputError("warm-up produced an empty history")
    return hist


def _cells(spec: ExperimentSpec):
    for n_nodes in spec.node_counts:
        for input_bytes in spec.input_sizes:
            for seed in spec.effective_seeds():
                yield n_nodes, input_bytes, seed


def weight_mse(predictions: list[tuple[float, ...]], realized: list[tuple[float, ...]]) -> float:
    """Mean squared error over every weight component of every task."""
    flat_p = [x for vec in predictions for x in vec]
    flat_r = [x for vec in realized for x in vec]
    return mse_error(flat_p, flat_r)


def _predicted_weights(
    kind: StrategyKind,
    record: ExecutionRecord,
    history: HistoryStore,
    completed: list[ExecutionRecord],
    total_phase: dict[Phase, int],
    params: StrategyParams,
    estimator: NnEstimator | None,
    cache: dict,
) -> tuple[float, ...]:
    """What ``kind`` would have predicted for this task's weights just before it
    finished. The neural strategy only models reduce weights; its map-side
    prediction is the constant (1, 0)."""
    if kind is StrategyKind.NN:
        if record.phase is Phase.REDUCE and estimator is not None:
            w = predict_reduce_weights(estimator, record.node_id, record.input_bytes)
            if w is not None:
                return w.for_phase(Phase.REDUCE)
        return CONSTANT_WEIGHTS.for_phase(record.phase)
    resolver = WeightResolver(
        kind, history, params, tuple(completed), total_phase, cache
    )
    return resolver.phase_weights(record.node_id, record.phase)


def run_weights_experiment(spec: ExperimentSpec) -> list[MetricsRow]:
    """Per-strategy squared error of predicted vs realized stage weights."""
    rows: list[MetricsRow] = []
    kinds = [k for k in spec.strategies if k is not StrategyKind.NO_SPECULATE]
    for n_nodes, input_bytes, seed in _cells(spec):
        config = _cell_config(spec, n_nodes, input_bytes, seed)
        warm = _warm_history(spec, config, seed)
        estimator = (
            train_estimator(warm, spec.train) if StrategyKind.NN in kinds else None
        )
        eval_run = run_simulation(config, StrategyKind.NO_SPECULATE, spec.params, job_id="eval")
        total_phase = {Phase.MAP: eval_run.n_map_tasks, Phase.REDUCE: eval_run.n_reduce_tasks}
        finished = sorted(eval_run.records, key=lambda r: (r.finished_at, r.task_id))
        growing = warm.copy()
        completed: list[ExecutionRecord] = []
        caches: dict[StrategyKind, dict] = {k: {} for k in kinds}
        preds: dict[tuple[StrategyKind, Phase], list[tuple[float, ...]]] = {}
        reals: dict[Phase, list[tuple[float, ...]]] = {Phase.MAP: [], Phase.REDUCE: []}
        for record in finished:
            for kind in kinds:
                p = _predicted_weights(
                    kind, record, growing, completed, total_phase,
                    spec.params, estimator, caches[kind],
                )
                preds.setdefault((kind, record.phase), []).append(p)
            reals[record.phase].append(record.weights)
            growing.append(record)
            completed.append(record)
        for kind in kinds:
            per_phase: dict[str, float] = {}
            for phase in (Phase.MAP, Phase.REDUCE):
                if reals[phase]:
                    per_phase[phase.value] = weight_mse(preds[(kind, phase)], reals[phase])
            combined = weight_mse(
                [p for ph in (Phase.MAP, Phase.REDUCE) for p in preds.get((kind, ph), [])],
                [r for ph in (Phase.MAP, Phase.REDUCE) for r in reals[ph]],
            )
            base = dict(
                strategy=kind.value, workload=spec.workload.value,
                nodes=n_nodes, input_bytes=input_bytes, seed=seed,
            )
            rows.append(MetricsRow(metric="weight_mse", value=combined, **base))
            for phase_name, value in per_phase.items():
                rows.append(MetricsRow(metric=f"weight_mse_{phase_name}", value=value, **base))
    return rows


def _sampled_tasks(result: SimResult, per_phase: int) -> list:
    """The last ``per_phase`` finishers of each phase, in finish order."""
    out = []
    for phase in (Phase.MAP, Phase.REDUCE):
        recs = sorted(
            (r for r in result.records if r.phase is phase),
            key=lambda r: (r.finished_at, r.task_id),
        )
        out.extend(recs[-per_phase:])
    return sorted(out, key=lambda r: (r.finished_at, r.task_id))


def run_tte_experiment(spec: ExperimentSpec) -> tuple[list[MetricsRow], list[TteTaskRow]]:
    """Remaining-time estimation error, sampled at 50% of each task's life.

    A no-speculation run provides the ground truth; each strategy's estimator
    is then replayed offline over the same snapshots, with the history store
    grown record by record exactly as the live run would have seen it. The
    judgment gate does not apply to the replay (estimates are wanted at every
    sampled instant), so min_elapsed is forced to zero here.
    """
    rows: list[MetricsRow] = []
    task_rows: list[TteTaskRow] = []
    kinds = [k for k in spec.strategies if k is not StrategyKind.NO_SPECULATE]
    replay_params = replace(spec.params, min_elapsed=0.0)
    for n_nodes, input_bytes, seed in _cells(spec):
        config = _cell_config(spec, n_nodes, input_bytes, seed)
        warm = _warm_history(spec, config, seed)
        estimator = (
            train_estimator(warm, spec.train) if StrategyKind.NN in kinds else None
        )
        eval_run = run_simulation(config, StrategyKind.NO_SPECULATE, spec.params, job_id="eval")
        total_phase = {Phase.MAP: eval_run.n_map_tasks, Phase.REDUCE: eval_run.n_reduce_tasks}
        attempts = {a.task_id: a for a in eval_run.attempts}
        finish_at = {r.task_id: r.finished_at for r in eval_run.records}
        samples = _sampled_tasks(eval_run, spec.tasks_per_phase)
        finished = sorted(eval_run.records, key=lambda r: (r.finished_at, r.task_id))
        growing = warm.copy()
        completed: list[ExecutionRecord] = []
        next_record = 0
        caches: dict[StrategyKind, dict] = {k: {} for k in kinds}
        errors: dict[tuple[StrategyKind, Phase], list[float]] = {}
        sample_points = sorted(
            (attempts[r.task_id].start + 0.5 * (finish_at[r.task_id] - attempts[r.task_id].start),
             r.task_id)
            for r in samples
        )
        for clock, task_id in sample_points:
            while next_record < len(finished) and finished[next_record].finished_at <= clock:
                growing.append(finished[next_record])
                completed.append(finished[next_record])
                next_record += 1
            a = attempts[task_id]
            snap = snapshot_from_attempt(
                a.task_id, a.phase, a.node_id, a.input_bytes, a.total_pairs,
                a.start, a.durations, clock,
            )
            if snap is None:
                continue
            realized = finish_at[task_id] - clock
            view = ClusterView(
                clock=clock,
                job_id="eval",
                total_tasks=eval_run.n_map_tasks + eval_run.n_reduce_tasks,
                snapshots=(snap,),
                nodes=config.effective_nodes(),
                free_containers={},
                running_backups=0,
                backed_up=frozenset(),
                completed=tuple(completed),
                total_phase_tasks=total_phase,
            )
            for kind in kinds:
                est = estimate_tasks(
                    kind, view, history=growing, estimator=estimator,
                    params=replay_params, cache=caches[kind],
                )
                if not est:
                    continue
                tte = est[0].tte
                errors.setdefault((kind, snap.phase), []).append(abs(tte - realized))
                task_rows.append(
                    TteTaskRow(
                        strategy=kind.value,
                        workload=spec.workload.value,
                        nodes=n_nodes,
                        input_bytes=input_bytes,
                        seed=seed,
                        phase=snap.phase.value,
                        task_id=task_id,
                        estimated_tte=tte,
                        realized_remaining=realized,
                    )
                )
        for kind in kinds:
            base = dict(
                strategy=kind.value, workload=spec.workload.value,
                nodes=n_nodes, input_bytes=input_bytes, seed=seed,
            )
            both: list[float] = []
            for phase in (Phase.MAP, Phase.REDUCE):
                errs = errors.get((kind, phase), [])
                if not errs:
                    continue
                both.extend(errs)
                rows.append(MetricsRow(
                    metric=f"tte_mae_{phase.value}",
                    value=sum(errs) / len(errs), **base,
                ))
                rows.append(MetricsRow(
                    metric=f"tte_mse_{phase.value}",
                    value=sum(e * e for e in errs) / len(errs), **base,
                ))
            if both:
                rows.append(MetricsRow(
                    metric="tte_mae", value=sum(both) / len(both), **base,
                ))
                rows.append(MetricsRow(
                    metric="tte_mse", value=sum(e * e for e in both) / len(both), **base,
                ))
    return rows, task_rows


def run_makespan_experiment(spec: ExperimentSpec) -> list[MetricsRow]:
    """Makespan, decision count, and cancelled work per grid cell and strategy.

    Within a cell every strategy sees the identical cluster, input, seed, and
    warm-up history, so makespans are directly comparable."""
    rows: list[MetricsRow] = []
    for n_nodes, input_bytes, seed in _cells(spec):
        config = _cell_config(spec, n_nodes, input_bytes, seed)
        warm = _warm_history(spec, config, seed)
        estimator = (
            train_estimator(warm, spec.train)
            if StrategyKind.NN in spec.strategies
            else None
        )
        for kind in spec.strategies:
            hist = warm.copy()
            result = run_simulation(
                config, kind, spec.params, history=hist, estimator=estimator, job_id="eval"
            )
            base = dict(
                strategy=kind.value, workload=spec.workload.value,
                nodes=n_nodes, input_bytes=input_bytes, seed=seed,
            )
            rows.append(MetricsRow(metric="makespan_s", value=result.makespan, **base))
            rows.append(MetricsRow(metric="decisions", value=float(len(result.decisions)), **base))
            rows.append(MetricsRow(metric="cancelled_work_s", value=result.cancelled_work_s, **base))
    return rows


def run_experiment(spec: ExperimentSpec) -> tuple[list[MetricsRow], list[TteTaskRow]]:
    """Dispatch on the experiment kind; sweep is the makespan grid."""
    if spec.experiment == "weights":
        return run_weights_experiment(spec), []
    if spec.experiment == "tte":
        return run_tte_experiment(spec)
    return run_makespan_experiment(spec), []


def _fmt(value: float) -> str:
    return f"{value:.6g}"


def _summary_text(rows: list[MetricsRow]) -> str:
    lines: list[str] = [f"rows: {len(rows)}"]
    metrics = sorted({r.metric for r in rows})
    cells = sorted({(r.workload, r.nodes, r.input_bytes) for r in rows})
    for metric in metrics:
        lines.append("")
        lines.append(f"== {metric} ==")
        for workload, nodes, input_bytes in cells:
            cell_rows = [
                r for r in rows
                if r.metric == metric and (r.workload, r.nodes, r.input_bytes)
                == (workload, nodes, input_bytes)
            ]
            if not cell_rows:
                continue
            lines.append(f"workload={workload} nodes={nodes} input_bytes={input_bytes}")
            strategies = sorted({r.strategy for r in cell_rows})
            for strategy in strategies:
                vals = [r.value for r in cell_rows if r.strategy == strategy]
                mean = statistics.mean(vals)
                sd = statistics.pstdev(vals) if len(vals) > 1 else 0.0
                lines.append(f"  {strategy}: {_fmt(mean)} +- {_fmt(sd)} (n={len(vals)})")
    # improvement tables: (baseline - method) / baseline * 100, positive = faster
    makespan_rows = [r for r in rows if r.metric == "makespan_s"]
    if makespan_rows:
        lines.append("")
        lines.append("== makespan improvement % ((baseline - method) / baseline * 100) ==")
        for workload, nodes, input_bytes in cells:
            cell_rows = [
                r for r in makespan_rows
                if (r.workload, r.nodes, r.input_bytes) == (workload, nodes, input_bytes)
            ]
            if not cell_rows:
                continue
            means = {}
            for strategy in sorted({r.strategy for r in cell_rows}):
                means[strategy] = statistics.mean(
                    [r.value for r in cell_rows if r.strategy == strategy]
                )
            for baseline in ("none", "late"):
                if baseline not in means or means[baseline] == 0:
                    continue
                parts = [
                    f"{s} {100.0 * (means[baseline] - m) / means[baseline]:+.2f}%"
                    for s, m in sorted(means.items())
                    if s != baseline
                ]
                lines.append(
                    f"workload={workload} nodes={nodes} input_bytes={input_bytes} "
                    f"vs {baseline}: " + "  ".join(parts)
                )
    lines.append("")
    return "\n".join(lines)


def emit_report(
    rows: list[MetricsRow],
    out_dir: str | Path,
    task_rows: list[TteTaskRow] | None = None,
    figures: bool = True,
) -> list[Path]:
    """Write rows.csv (+ tte_tasks.csv), summary.txt, and figures; byte-stable.

    Rows are sorted by every key field and floats are written with repr, so an
    identical row set always produces identical bytes.
    """
    if not rows:
        raise DegenerateInputError("no metric rows to report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    rows_path = out_dir / "rows.csv"
    with rows_path.open("w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CSV_HEADER.split(","))
        for r in sorted(rows, key=MetricsRow.key):
            w.writerow(
                [r.strategy, r.workload, r.nodes, r.input_bytes, r.seed, r.metric, repr(r.value)]
            )
    written.append(rows_path)

    if task_rows:
        tasks_path = out_dir / "tte_tasks.csv"
        with tasks_path.open("w", encoding="utf-8", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(TASK_CSV_HEADER.split(","))
            for t in sorted(task_rows, key=TteTaskRow.key):
                w.writerow(
                    [
                        t.strategy, t.workload, t.nodes, t.input_bytes, t.seed,
                        t.phase, t.task_id, repr(t.estimated_tte), repr(t.realized_remaining),
                    ]
                )
        written.append(tasks_path)

    summary_path = out_dir / "summary.txt"
    summary_path.write_text(_summary_text(rows), encoding="utf-8")
    written.append(summary_path)

    if figures:
        from .figures import render_figures

        written.extend(render_figures(rows, out_dir, task_rows))
    return written


def load_rows(path: str | Path) -> list[MetricsRow]:
    """Read a rows.csv back; inverse of emit_report's writer."""
    out: list[MetricsRow] = []
    with Path(path).open(encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != CSV_HEADER.split(","):
            raise ConfigurationError(f"unexpected header in {path}: {reader.fieldnames}")
        for rec in reader:
            out.append(
                MetricsRow(
                    strategy=rec["strategy"],
                    workload=rec["workload"],
                    nodes=int(rec["nodes"]),
                    input_bytes=int(rec["input_bytes"]),
                    seed=int(rec["seed"]),
                    metric=rec["metric"],
                    value=float(rec["value"]),
                )
            )
    return out


def load_task_rows(path: str | Path) -> list[TteTaskRow]:
    out: list[TteTaskRow] = []
    with Path(path).open(encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != TASK_CSV_HEADER.split(","):
            raise ConfigurationError(f"unexpected header in {path}: {reader.fieldnames}")
        for rec in reader:
            out.append(
                TteTaskRow(
                    strategy=rec["strategy"],
                    workload=rec["workload"],
                    nodes=int(rec["nodes"]),
                    input_bytes=int(rec["input_bytes"]),
                    seed=int(rec["seed"]),
                    phase=rec["phase"],
                    task_id=rec["task_id"],
                    estimated_tte=float(rec["estimated_tte"]),
                    realized_remaining=float(rec["realized_remaining"]),
                )
            )
    return out
