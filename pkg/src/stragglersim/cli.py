"""Command-line interface.

Subcommands:

* ``simulate``   - run one or more jobs under a chosen strategy and print a
  one-line result per run.
* ``train``      - fit the per-node networks (and report per-phase k-means
  diagnostics) from a saved history file.
* ``experiment`` - run a canned experiment grid and write CSV, summary, and
  figure files.
* ``report``     - re-emit summary and figures from previously written CSVs.

Judgment gate defaults differ on purpose: ``simulate`` keeps the conventional
60 s minimum elapsed time before a task may be judged, while ``experiment``
defaults to 5 s because the canned grids run seconds-long desk-scale tasks.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .bench import default_spec, emit_report, load_rows, load_task_rows, run_experiment
from .errors import ConfigurationError, DegenerateInputError, NoBackupTargetError
from .history import HistoryStore
from .learners.estimator import load_estimator, save_estimator, train_estimator
from .learners.kmeans import kmeans_fit
from .learners.mlp import TrainConfig
from .simulator import (
    ClusterConfig,
    Workload,
    cluster_from_speeds,
    parse_size,
    run_simulation,
    uniform_cluster,
)
from .strategies import StrategyKind, StrategyParams
from .taskmodel import DEFAULT_BLOCK_SIZE, Phase

_STRATEGY_NAMES = [k.value for k in StrategyKind]
_WORKLOAD_NAMES = [w.value for w in Workload]

_PARAM_FLAGS = (
    ("--speculative-cap", "speculative_cap", float, "concurrent backup cap as a fraction of the job's tasks"),
    ("--bp", "bp", float, "backup fraction bound (strict upper bound factor)"),
    ("--stt", "stt", float, "slow-task time threshold"),
    ("--stac", "stac", float, "slow-task rate threshold"),
    ("--k", "k", int, "cluster count for historical weight clustering"),
    ("--min-elapsed", "min_elapsed", float, "seconds a task must run before it can be judged"),
    ("--esamr-completion-fraction", "esamr_completion_fraction", float,
     "fraction of a phase that must finish before per-node refinement"),
    ("--naive-gap", "naive_gap", float, "naive detector's progress gap below the mean"),
    ("--slow-node-fraction", "slow_node_fraction", float, "fraction of nodes considered slow"),
    ("--esamr-seed", "esamr_seed", int, "seed for weight clustering"),
)


def _add_param_flags(parser: argparse.ArgumentParser, min_elapsed_default: float) -> None:
    defaults = StrategyParams()
    for flag, dest, typ, help_text in _PARAM_FLAGS:
        default = min_elapsed_default if dest == "min_elapsed" else getattr(defaults, dest)
        parser.add_argument(flag, dest=dest, type=typ, default=default, help=help_text)


def _params_from(args: argparse.Namespace) -> StrategyParams:
    return StrategyParams(**{dest: getattr(args, dest) for _, dest, _, _ in _PARAM_FLAGS})


def _train_config(args: argparse.Namespace) -> TrainConfig:
    return TrainConfig(
        learning_rate=args.lr,
        epochs=args.epochs,
        tolerance=args.tolerance,
        seed=args.train_seed,
    )


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--epochs", type=int, default=100, help="training epochs")
    parser.add_argument("--lr", type=float, default=0.05, help="learning rate")
    parser.add_argument("--tolerance", type=float, default=1e-4, help="early-stop training error")
    parser.add_argument("--train-seed", type=int, default=0, help="weight initialization seed")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stragglersim",
        description="Simulate speculative execution strategies on heterogeneous MapReduce clusters.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one or more jobs under one strategy")
    sim.add_argument("--strategy", choices=_STRATEGY_NAMES, default="none")
    sim.add_argument("--nodes", type=int, default=4, help="worker node count")
    sim.add_argument("--containers", type=int, default=2, help="container slots per node")
    sim.add_argument("--node-speeds", default=None,
                     help="comma-separated per-node speed factors (overrides --nodes)")
    sim.add_argument("--input-size", default="1G", help="job input size, e.g. 256M or 1G")
    sim.add_argument("--block-size", default=None, help="input split size (default 128M)")
    sim.add_argument("--workload", choices=_WORKLOAD_NAMES, default="wordcount")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--reps", type=int, default=1, help="runs; rep i uses seed+i")
    sim.add_argument("--noise", type=float, default=0.1, help="uniform duration noise amplitude")
    sim.add_argument("--straggler-fraction", type=float, default=0.0)
    sim.add_argument("--straggler-multiplier", type=float, default=1.0)
    sim.add_argument("--reduce-tasks", type=int, default=None)
    sim.add_argument("--config", default=None, help="key=value cluster config file")
    sim.add_argument("--history", default=None,
                     help="history file: loaded if present, extended with this run's records")
    sim.add_argument("--models", default=None, help="estimator directory for --strategy nn")
    sim.add_argument("--out", default=None, help="also write the result lines to this file")
    _add_param_flags(sim, min_elapsed_default=60.0)
    _add_train_flags(sim)

    tr = sub.add_parser("train", help="fit per-node networks from a history file")
    tr.add_argument("--history", required=True)
    tr.add_argument("--out", required=True, help="directory for model files")
    tr.add_argument("--block-size", default=None)
    tr.add_argument("--k", type=int, default=10, help="cluster count for the k-means diagnostics")
    tr.add_argument("--esamr-seed", type=int, default=0)
    _add_train_flags(tr)

    ex = sub.add_parser("experiment", help="run a canned experiment grid")
    ex.add_argument("--kind", choices=["weights", "tte", "makespan", "sweep"], required=True)
    ex.add_argument("--out", required=True, help="output directory")
    ex.add_argument("--strategies", default=None,
                    help="comma-separated strategies (default depends on kind)")
    ex.add_argument("--nodes", type=int, nargs="+", default=None)
    ex.add_argument("--input-size", nargs="+", default=None)
    ex.add_argument("--seeds", type=int, nargs="+", default=None)
    ex.add_argument("--reps", type=int, default=1)
    ex.add_argument("--workload", choices=_WORKLOAD_NAMES, default=None)
    ex.add_argument("--warmups", type=int, default=None)
    ex.add_argument("--tasks-per-phase", type=int, default=None)
    ex.add_argument("--reduce-per-node", type=int, default=None)
    ex.add_argument("--containers", type=int, default=None)
    ex.add_argument("--noise", type=float, default=None)
    ex.add_argument("--straggler-fraction", type=float, default=None)
    ex.add_argument("--straggler-multiplier", type=float, default=None)
    ex.add_argument("--two-regime", action=argparse.BooleanOptionalAction, default=None)
    ex.add_argument("--no-figures", action="store_true")
    _add_param_flags(ex, min_elapsed_default=5.0)
    _add_train_flags(ex)

    rep = sub.add_parser("report", help="re-emit summary and figures from stored CSVs")
    rep.add_argument("--rows", required=True, help="rows.csv from a previous experiment")
    rep.add_argument("--per-task", default=None, help="tte_tasks.csv from a tte experiment")
    rep.add_argument("--out", required=True)
    rep.add_argument("--no-figures", action="store_true")

    return parser


def _simulate_config(args: argparse.Namespace) -> ClusterConfig:
    flag_overrides: dict = {}

    def changed(dest: str) -> bool:
        return getattr(args, dest) != _SIM_DEFAULTS[dest]

    if args.node_speeds is not None:
        speeds = [float(s) for s in args.node_speeds.split(",") if s.strip()]
        flag_overrides["nodes"] = cluster_from_speeds(speeds, args.containers)
    elif changed("nodes") or changed("containers") or args.config is None:
        flag_overrides["nodes"] = uniform_cluster(args.nodes, args.containers)
    if changed("input_size") or args.config is None:
        flag_overrides["input_bytes"] = parse_size(args.input_size)
    if args.block_size is not None:
        flag_overrides["block_size"] = parse_size(args.block_size)
    if changed("workload") or args.config is None:
        flag_overrides["workload"] = Workload(args.workload)
    for dest in ("noise", "straggler_fraction", "straggler_multiplier", "seed"):
        if changed(dest) or args.config is None:
            flag_overrides[dest] = getattr(args, dest)
    if args.reduce_tasks is not None:
        flag_overrides["reduce_tasks"] = args.reduce_tasks

    if args.config is not None:
        return ClusterConfig.from_file(args.config, **flag_overrides)
    return ClusterConfig(**flag_overrides)


_SIM_DEFAULTS = {
    "nodes": 4,
    "containers": 2,
    "input_size": "1G",
    "workload": "wordcount",
    "noise": 0.1,
    "straggler_fraction": 0.0,
    "straggler_multiplier": 1.0,
    "seed": 0,
}


def _cmd_simulate(args: argparse.Namespace) -> int:
    config = _simulate_config(args)
    params = _params_from(args)
    history = None
    if args.history is not None:
        path = Path(args.history)
        history = HistoryStore.load(path) if path.is_file() else HistoryStore()
    estimator = None
    if args.strategy == "nn":
        if args.models is not None:
            estimator = load_estimator(args.models)
        elif history is not None and len(history) > 0:
            estimator = train_estimator(history, _train_config(args), config.block_size)
    lines = []
    for rep in range(args.reps):
        cfg = replace(config, seed=config.seed + rep)
        result = run_simulation(
            cfg, args.strategy, params, history=history,
            estimator=estimator, job_id=f"job{rep:02d}",
        )
        lines.append(
            f"strategy={result.strategy} workload={cfg.workload.value}"
            f" nodes={len(cfg.nodes)} input_bytes={cfg.input_bytes} seed={cfg.seed}"
            f" makespan_s={result.makespan!r} decisions={len(result.decisions)}"
            f" dropped={len(result.dropped)} cancelled_work_s={result.cancelled_work_s!r}"
        )
        print(lines[-1])
    if args.history is not None:
        history.save(args.history)
    if args.out is not None:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    history = HistoryStore.load(args.history)
    if len(history) == 0:
        raise DegenerateInputError(f"history at {args.history} is empty")
    block_size = parse_size(args.block_size) if args.block_size else DEFAULT_BLOCK_SIZE
    estimator = train_estimator(history, _train_config(args), block_size)
    manifest = save_estimator(estimator, args.out)
    print(f"trained map models: {sorted(estimator.map_models)}")
    print(f"trained reduce models: {sorted(estimator.reduce_models)}")
    for phase in (Phase.MAP, Phase.REDUCE):
        rows = history.all_records(phase)
        if not rows:
            continue
        model = kmeans_fit([r.weights for r in rows], k=args.k, seed=args.esamr_seed)
        print(
            f"kmeans {phase.value}: k={model.k} inertia={model.inertia:.6g}"
            f" iterations={model.n_iter}"
        )
    print(f"wrote {manifest}")
    return 0


def _cmd_experiment(args: argparse.Namespace) -> int:
    overrides: dict = {
        "params": _params_from(args),
        "train": _train_config(args),
        "repetitions": args.reps,
    }
    if args.strategies is not None:
        overrides["strategies"] = tuple(
            StrategyKind(s.strip()) for s in args.strategies.split(",") if s.strip()
        )
    if args.nodes is not None:
        overrides["node_counts"] = tuple(args.nodes)
    if args.input_size is not None:
        overrides["input_sizes"] = tuple(parse_size(s) for s in args.input_size)
    if args.seeds is not None:
        overrides["seeds"] = tuple(args.seeds)
    if args.workload is not None:
        overrides["workload"] = Workload(args.workload)
    for dest, spec_field in (
        ("warmups", "warmups"),
        ("tasks_per_phase", "tasks_per_phase"),
        ("reduce_per_node", "reduce_per_node"),
        ("containers", "containers"),
        ("noise", "noise"),
        ("straggler_fraction", "straggler_fraction"),
        ("straggler_multiplier", "straggler_multiplier"),
        ("two_regime", "two_regime"),
    ):
        value = getattr(args, dest)
        if value is not None:
            overrides[spec_field] = value
    spec = default_spec(args.kind, **overrides)
    rows, task_rows = run_experiment(spec)
    files = emit_report(rows, args.out, task_rows, figures=not args.no_figures)
    for f in files:
        print(f"wrote {f}")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    rows = load_rows(args.rows)
    task_rows = load_task_rows(args.per_task) if args.per_task else None
    files = emit_report(rows, args.out, task_rows, figures=not args.no_figures)
    for f in files:
        print(f"wrote {f}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "train":
            return _cmd_train(args)
        if args.command == "experiment":
            return _cmd_experiment(args)
        if args.command == "report":
            return _cmd_report(args)
    except (ConfigurationError, DegenerateInputError, NoBackupTargetError, OSError, ValueError) as exc:
        # ValueError covers malformed user-supplied files (history lines,
        # report CSVs); argparse has already vetted the flag values.
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
