"""Discrete-event simulation of speculative execution on MapReduce clusters.

The package models five-stage map/reduce tasks on heterogeneous nodes, runs
pluggable straggler-detection strategies against them, and benchmarks the
strategies on canned experiment grids.
"""

from __future__ import annotations

from .bench import (
    ExperimentSpec,
    MetricsRow,
    TteTaskRow,
    default_spec,
    emit_report,
    load_rows,
    load_task_rows,
    run_experiment,
)
from .errors import (
    ConfigurationError,
    DegenerateInputError,
    NoBackupTargetError,
    WrongPhaseError,
)
from .history import HistoryStore
from .learners.estimator import (
    NnEstimator,
    load_estimator,
    predict_map_remaining,
    predict_reduce_weights,
    save_estimator,
    train_estimator,
)
from .learners.kmeans import KmeansModel, kmeans_fit, kmeans_nearest
from .learners.mlp import MlpModel, TrainConfig, mlp_train
from .progress import (
    average_progress,
    map_progress,
    progress_rate,
    sub_progress,
    time_to_end,
    weighted_reduce_progress,
)
from .simulator import (
    ClusterConfig,
    SimResult,
    Workload,
    cluster_from_speeds,
    parse_size,
    run_simulation,
    snapshots_at,
    uniform_cluster,
)
from .strategies import (
    ClusterView,
    SpeculationDecision,
    Strategy,
    StrategyKind,
    StrategyParams,
    make_strategy,
)
from .taskmodel import (
    ExecutionRecord,
    NodeSpec,
    Phase,
    Stage,
    StageWeights,
    TaskSnapshot,
)

__all__ = [
    "ClusterConfig",
    "ClusterView",
    "ConfigurationError",
    "DegenerateInputError",
    "ExecutionRecord",
    "ExperimentSpec",
    "HistoryStore",
    "KmeansModel",
    "MetricsRow",
    "MlpModel",
    "NnEstimator",
    "NoBackupTargetError",
    "NodeSpec",
    "Phase",
    "SimResult",
    "SpeculationDecision",
    "Stage",
    "StageWeights",
    "Strategy",
    "StrategyKind",
    "StrategyParams",
    "TaskSnapshot",
    "TrainConfig",
    "TteTaskRow",
    "Workload",
    "WrongPhaseError",
    "average_progress",
    "cluster_from_speeds",
    "default_spec",
    "emit_report",
    "kmeans_fit",
    "kmeans_nearest",
    "load_estimator",
    "load_rows",
    "load_task_rows",
    "make_strategy",
    "map_progress",
    "mlp_train",
    "parse_size",
    "predict_map_remaining",
    "predict_reduce_weights",
    "progress_rate",
    "run_experiment",
    "run_simulation",
    "save_estimator",
    "snapshots_at",
    "sub_progress",
    "time_to_end",
    "train_estimator",
    "uniform_cluster",
    "weighted_reduce_progress",
]

__version__ = "0.1.0"
