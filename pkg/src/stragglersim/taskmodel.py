"""Domain types shared by every other module: stages, weights, snapshots, records, nodes.

All types are immutable value objects and safe to share between threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum, IntEnum

from .errors import DegenerateInputError

WEIGHT_SUM_TOL = 1e-9
DURATION_SUM_TOL = 1e-6

# Pairs model: tasks carry synthetic key/value pair counts so that only the
# processed/total ratio is meaningful. One block's worth of input is 10,000 pairs.
PAIRS_PER_BLOCK = 10_000
DEFAULT_BLOCK_SIZE = 128 * 2**20


def pairs_for_input(input_bytes: int, block_size: int = DEFAULT_BLOCK_SIZE) -> int:
    """Total synthetic pairs for a task over the given input size."""
    if input_bytes <= 0 or block_size <= 0:
        raise ValueError("input_bytes and block_size must be > 0")
    return max(1, round(PAIRS_PER_BLOCK * input_bytes / block_size))


class Phase(Enum):
    MAP = "map"
    REDUCE = "reduce"


class Stage(IntEnum):
    """The five task stages, ordinal order = execution order."""

    MAP_COPY = 0
    MAP_COMBINE = 1
    REDUCE_SHUFFLE = 2
    REDUCE_SORT = 3
    REDUCE_REDUCE = 4

    @property
    def phase(self) -> Phase:
        return Phase.MAP if self <= Stage.MAP_COMBINE else Phase.REDUCE

    @property
    def index_in_phase(self) -> int:
        """0-based position inside the owning phase (the K of the naive reduce formula)."""
        return int(self) if self.phase is Phase.MAP else int(self) - 2


MAP_STAGES = (Stage.MAP_COPY, Stage.MAP_COMBINE)
REDUCE_STAGES = (Stage.REDUCE_SHUFFLE, Stage.REDUCE_SORT, Stage.REDUCE_REDUCE)


def stages_of(phase: Phase) -> tuple[Stage, ...]:
    return MAP_STAGES if phase is Phase.MAP else REDUCE_STAGES


@dataclass(frozen=True)
class StageWeights:
    """Per-stage fractions of phase execution time; each phase's weights sum to 1."""

    m1: float
    m2: float
    r1: float
    r2: float
    r3: float

    def __post_init__(self) -> None:
        components = (self.m1, self.m2, self.r1, self.r2, self.r3)
        if any(c < -WEIGHT_SUM_TOL or c > 1 + WEIGHT_SUM_TOL for c in components):
            msg = f"weight components must lie in [0, 1]: {components}"
            raise ValueError(msg)
        if abs(self.m1 + self.m2 - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"map weights must sum to 1: {self.m1} + {self.m2}")
        if abs(self.r1 + self.r2 + self.r3 - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"reduce weights must sum to 1: {self.r1} + {self.r2} + {self.r3}")

    @classmethod
    def naive(cls) -> "StageWeights":
        """The constant weights used by the naive and LATE detectors."""
        return cls(1.0, 0.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)

    def for_phase(self, phase: Phase) -> tuple[float, ...]:
        if phase is Phase.MAP:
            return (self.m1, self.m2)
        return (self.r1, self.r2, self.r3)


@dataclass(frozen=True)
class TaskSnapshot:
    """A running task's live progress observables at one instant."""

    task_id: str
    phase: Phase
    current_stage: Stage
    processed_pairs: int
    total_pairs: int
    elapsed_time: float
    input_bytes: int
    node_id: str

    def __post_init__(self) -> None:
        if self.total_pairs < 1:
            raise ValueError("total_pairs must be >= 1")
        if not 0 <= self.processed_pairs <= self.total_pairs:
            msg = f"processed_pairs must lie in [0, {self.total_pairs}]: {self.processed_pairs}"
            raise ValueError(msg)
        if self.elapsed_time < 0:
            raise ValueError("elapsed_time must be >= 0")
        if self.current_stage.phase is not self.phase:
            raise ValueError(f"stage {self.current_stage.name} does not belong to phase {self.phase.value}")


@dataclass(frozen=True)
class ExecutionRecord:
    """A completed task's stored history row; the training unit for learned estimators."""

    job_id: str
    task_id: str
    node_id: str
    phase: Phase
    input_bytes: int
    stage_durations: tuple[float, ...]
    weights: tuple[float, ...]
    total_time: float
    finished_at: float

    def __post_init__(self) -> None:
        expected = len(stages_of(self.phase))
        if len(self.stage_durations) != expected:
            msg = f"{self.phase.value} phase needs {expected} stage durations, got {len(self.stage_durations)}"
            raise ValueError(msg)
        if abs(sum(self.stage_durations) - self.total_time) > DURATION_SUM_TOL:
            raise ValueError("stage durations must sum to total_time")
        if len(self.weights) != expected:
            raise ValueError("one weight per stage of the phase")
        for k, (d, w) in enumerate(zip(self.stage_durations, self.weights)):
            if abs(w - d / self.total_time) > WEIGHT_SUM_TOL:
                raise ValueError(f"weight {k} is not duration {k} / total_time")


@dataclass(frozen=True)
class NodeSpec:
    """A worker node: per-stage speed multipliers (1.0 = nominal) and container slots."""

    node_id: str
    speed_factors: tuple[float, float, float, float, float]
    containers: int

    def __post_init__(self) -> None:
        if len(self.speed_factors) != len(Stage):
            raise ValueError("one speed factor per stage")
        if any(s <= 0 for s in self.speed_factors):
            raise ValueError("speed factors must be > 0")
        if self.containers < 1:
            raise ValueError("container count must be >= 1")

    @classmethod
    def uniform(cls, node_id: str, speed: float = 1.0, containers: int = 2) -> "NodeSpec":
        return cls(node_id, (speed,) * 5, containers)

    def speed(self, stage: Stage) -> float:
        return self.speed_factors[int(stage)]

    @property
    def mean_speed(self) -> float:
        return sum(self.speed_factors) / len(self.speed_factors)


def realized_weights_from_durations(durations: tuple[float, ...] | list[float]) -> tuple[float, ...]:
    """Ratio of each stage's execution time to the phase total.

    Raises DegenerateInputError when the durations sum to zero.
    """
    if not durations:
        raise DegenerateInputError("durations must be non-empty")
    if any(d < 0 for d in durations):
        raise ValueError("durations must be >= 0")
    total = sum(durations)
    if total <= 0:
        raise DegenerateInputError("durations sum to zero")
    return tuple(d / total for d in durations)
