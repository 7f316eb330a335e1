"""Pure progress and remaining-time math.

Every function here is a pure function over plain values; the strategies module
composes them into detectors. Conventions:

- progress scores live in [0, 1]
- rates are score per second
- a stalled task (rate 0, score < 1) gets a +inf remaining-time sentinel so it
  sorts as the worst straggler
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DegenerateInputError, WrongPhaseError
from .taskmodel import Phase, Stage, StageWeights, TaskSnapshot

INF = math.inf


@dataclass(frozen=True)
class ProgressReport:
    """One task's derived progress triple."""

    progress: float
    rate: float
    tte: float

    def __post_init__(self) -> None:
        if not 0 <= self.progress <= 1:
            raise ValueError("progress must lie in [0, 1]")
        if self.rate < 0:
            raise ValueError("rate must be >= 0")
        if self.tte < 0:
            raise ValueError("tte must be >= 0")


def map_progress(snapshot: TaskSnapshot) -> float:
    """Fraction of a map task's pairs processed."""
    if snapshot.phase is not Phase.MAP:
        raise WrongPhaseError("map_progress needs a map-phase snapshot")
    return sub_progress(snapshot.processed_pairs, snapshot.total_pairs)


def reduce_progress_naive(stage_index: int, processed: int, total: int) -> float:
    """Reduce progress with equal thirds per stage: (K + processed/total) / 3."""
    if stage_index not in (0, 1, 2):
        raise ValueError(f"stage_index must be 0, 1 or 2: {stage_index}")
    return (stage_index + sub_progress(processed, total)) / 3.0


def sub_progress(processed: int, total: int) -> float:
    """Within-stage progress: processed pairs over total pairs."""
    if total < 1:
        raise DegenerateInputError("total pairs must be >= 1")
    if not 0 <= processed <= total:
        raise ValueError(f"processed must lie in [0, {total}]: {processed}")
    return processed / total


def weighted_reduce_progress(weights: StageWeights, current_stage: Stage, subps: float) -> float:
    """Reduce progress under per-stage weights: completed stages count fully,
    the current stage contributes its weight scaled by subps."""
    if current_stage.phase is not Phase.REDUCE:
        raise WrongPhaseError(f"{current_stage.name} is not a reduce stage")
    if not 0 <= subps <= 1:
        raise ValueError("subps must lie in [0, 1]")
    r = (weights.r1, weights.r2, weights.r3)
    k = current_stage.index_in_phase
    return sum(r[:k]) + r[k] * subps


def progress_rate(progress: float, elapsed: float) -> float:
    """Progress score per second of elapsed task time."""
    if elapsed <= 0:
        raise DegenerateInputError("elapsed time must be > 0 before rating a task")
    if not 0 <= progress <= 1:
        raise ValueError("progress must lie in [0, 1]")
    return progress / elapsed


def time_to_end(progress: float, rate: float) -> float:
    """Estimated seconds remaining: (1 - progress) / rate.

    A finished task returns 0 regardless of rate; a stalled unfinished task
    returns the +inf sentinel.
    """
    if not 0 <= progress <= 1:
        raise ValueError("progress must lie in [0, 1]")
    if rate < 0:
        raise ValueError("rate must be >= 0")
    if progress >= 1:
        return 0.0
    if rate == 0:
        return INF
    return (1.0 - progress) / rate


def _mean(values: list[float], what: str) -> float:
    if not values:
        raise DegenerateInputError(f"cannot average an empty {what} list")
    return sum(values) / len(values)


def average_progress(scores: list[float]) -> float:
    return _mean(scores, "score")


def average_rate(rates: list[float]) -> float:
    return _mean(rates, "rate")


def average_tte(ttes: list[float]) -> float:
    """Mean remaining time; callers exclude +inf sentinels before averaging."""
    return _mean(ttes, "tte")


def mse_error(estimates: list[float], actuals: list[float]) -> float:
    """Mean squared residual between estimates and actuals."""
    if len(estimates) != len(actuals):
        raise ValueError("estimates and actuals must have equal length")
    if not estimates:
        raise DegenerateInputError("cannot score empty estimate lists")
    return sum((e - a) ** 2 for e, a in zip(estimates, actuals)) / len(estimates)
