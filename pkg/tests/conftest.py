"""Shared builders for the test suite."""

from __future__ import annotations

import itertools

import pytest

from stragglersim.taskmodel import (
    ExecutionRecord,
    Phase,
    Stage,
    TaskSnapshot,
    realized_weights_from_durations,
)

_counter = itertools.count()


def make_record(
    node_id: str,
    phase: Phase,
    durations: tuple[float, ...],
    *,
    job_id: str = "j0",
    task_id: str | None = None,
    input_bytes: int = 128 * 2**20,
    finished_at: float | None = None,
) -> ExecutionRecord:
    n = next(_counter)
    return ExecutionRecord(
        job_id=job_id,
        task_id=task_id if task_id is not None else f"t{n:04d}",
        node_id=node_id,
        phase=phase,
        input_bytes=input_bytes,
        stage_durations=tuple(durations),
        weights=realized_weights_from_durations(durations),
        total_time=sum(durations),
        finished_at=finished_at if finished_at is not None else float(n),
    )


def make_map_snapshot(
    task_id: str,
    node_id: str,
    progress: float,
    elapsed: float,
    *,
    total_pairs: int = 1000,
    stage: Stage = Stage.MAP_COPY,
    input_bytes: int = 128 * 2**20,
) -> TaskSnapshot:
    """Map snapshot whose pair ratio equals the requested phase progress."""
    return TaskSnapshot(
        task_id=task_id,
        phase=Phase.MAP,
        current_stage=stage,
        processed_pairs=round(progress * total_pairs),
        total_pairs=total_pairs,
        elapsed_time=elapsed,
        input_bytes=input_bytes,
        node_id=node_id,
    )


def make_reduce_snapshot(
    task_id: str,
    node_id: str,
    stage: Stage,
    subps: float,
    elapsed: float,
    *,
    total_pairs: int = 1000,
    input_bytes: int = 128 * 2**20,
) -> TaskSnapshot:
    """Reduce snapshot whose pair ratio equals the requested within-stage progress."""
    return TaskSnapshot(
        task_id=task_id,
        phase=Phase.REDUCE,
        current_stage=stage,
        processed_pairs=round(subps * total_pairs),
        total_pairs=total_pairs,
        elapsed_time=elapsed,
        input_bytes=input_bytes,
        node_id=node_id,
    )


@pytest.fixture
def record_factory():
    return make_record
