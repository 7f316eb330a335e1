from __future__ import annotations

import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from stragglersim.errors import DegenerateInputError, WrongPhaseError
from stragglersim.progress import (
    INF,
    ProgressReport,
    average_progress,
    average_rate,
    average_tte,
    map_progress,
    mse_error,
    progress_rate,
    reduce_progress_naive,
    sub_progress,
    time_to_end,
    weighted_reduce_progress,
)
from stragglersim.taskmodel import Phase, Stage, StageWeights

from conftest import make_map_snapshot, make_reduce_snapshot


def test_map_progress_is_pair_ratio():
    snap = make_map_snapshot("m0", "n00", 0.0, 1.0, total_pairs=400)
    assert map_progress(snap) == 0.0
    snap = make_map_snapshot("m0", "n00", 0.25, 1.0, total_pairs=400)
    assert map_progress(snap) == 0.25


def test_map_progress_rejects_reduce_snapshot():
    snap = make_reduce_snapshot("r0", "n00", Stage.REDUCE_SORT, 0.5, 1.0)
    with pytest.raises(WrongPhaseError):
        map_progress(snap)


@pytest.mark.parametrize(
    "stage_index, processed, total, expected",
    [
        (0, 0, 10, 0.0),
        (0, 5, 10, 1 / 6),
        (1, 5, 10, 0.5),
        (2, 10, 10, 1.0),
        (2, 1, 4, 0.75),
    ],
)
def test_reduce_progress_equal_thirds(stage_index, processed, total, expected):
    assert reduce_progress_naive(stage_index, processed, total) == pytest.approx(expected)


def test_reduce_progress_rejects_bad_stage_index():
    with pytest.raises(ValueError):
        reduce_progress_naive(3, 1, 2)


def test_sub_progress_bounds():
    assert sub_progress(0, 7) == 0.0
    assert sub_progress(7, 7) == 1.0
    with pytest.raises(DegenerateInputError):
        sub_progress(0, 0)
    with pytest.raises(ValueError):
        sub_progress(8, 7)


def test_weighted_reduce_progress_hand_cases():
    w = StageWeights(1.0, 0.0, 0.5, 0.3, 0.2)
    assert weighted_reduce_progress(w, Stage.REDUCE_SHUFFLE, 0.0) == 0.0
    assert weighted_reduce_progress(w, Stage.REDUCE_SHUFFLE, 1.0) == pytest.approx(0.5)
    assert weighted_reduce_progress(w, Stage.REDUCE_SORT, 0.5) == pytest.approx(0.65)
    assert weighted_reduce_progress(w, Stage.REDUCE_REDUCE, 1.0) == pytest.approx(1.0)


def test_weighted_reduce_progress_rejects_map_stage():
    with pytest.raises(WrongPhaseError):
        weighted_reduce_progress(StageWeights.naive(), Stage.MAP_COPY, 0.5)


@given(
    r=st.tuples(
        st.floats(0.01, 1.0), st.floats(0.01, 1.0), st.floats(0.01, 1.0)
    ).map(lambda t: tuple(v / sum(t) for v in t)),
    stage=st.sampled_from((Stage.REDUCE_SHUFFLE, Stage.REDUCE_SORT, Stage.REDUCE_REDUCE)),
    subps=st.floats(0.0, 1.0),
)
def test_weighted_reduce_progress_matches_prefix_sum(r, stage, subps):
    """The weighted score is the completed-stage prefix sum plus the scaled
    current stage; it stays in [0, 1] and grows with subps."""
    weights = StageWeights(1.0, 0.0, *r)
    k = stage.index_in_phase
    expected = sum(r[:k]) + r[k] * subps
    got = weighted_reduce_progress(weights, stage, subps)
    assert got == pytest.approx(expected, abs=1e-12)
    assert -1e-9 <= got <= 1 + 1e-9
    bumped = weighted_reduce_progress(weights, stage, min(1.0, subps + 0.1))
    assert bumped >= got - 1e-12


def test_progress_rate_and_guard():
    assert progress_rate(0.5, 10.0) == 0.05
    with pytest.raises(DegenerateInputError):
        progress_rate(0.5, 0.0)


def test_time_to_end_cases():
    assert time_to_end(0.25, 0.05) == pytest.approx(15.0)
    assert time_to_end(1.0, 0.0) == 0.0  # finished tasks need no backup
    assert time_to_end(0.5, 0.0) == INF  # stalled task sorts as worst straggler
    assert math.isinf(INF)


@given(progress=st.floats(1e-6, 0.999), elapsed=st.floats(0.001, 1e4))
def test_rate_tte_roundtrip(progress, elapsed):
    """Consuming the remaining work at the observed rate takes tte seconds:
    progress + rate * tte == 1 whenever rate > 0."""
    rate = progress_rate(progress, elapsed)
    tte = time_to_end(progress, rate)
    assert progress + rate * tte == pytest.approx(1.0, abs=1e-9)


def test_averages():
    assert average_progress([0.2, 0.4, 0.9]) == pytest.approx(0.5)
    assert average_rate([0.1, 0.3]) == pytest.approx(0.2)
    assert average_tte([10.0, 20.0]) == pytest.approx(15.0)
    with pytest.raises(DegenerateInputError):
        average_progress([])


def test_mse_error():
    assert mse_error([0.0, 1.0], [1.0, 1.0]) == pytest.approx(0.5)
    assert mse_error([2.0], [2.0]) == 0.0
    with pytest.raises(ValueError):
        mse_error([1.0], [1.0, 2.0])
    with pytest.raises(DegenerateInputError):
        mse_error([], [])


@given(
    pairs=st.lists(
        st.tuples(st.floats(-10, 10), st.floats(-10, 10)), min_size=1, max_size=30
    )
)
def test_mse_error_matches_bruteforce(pairs):
    est = [p[0] for p in pairs]
    act = [p[1] for p in pairs]
    brute = sum((e - a) ** 2 for e, a in zip(est, act)) / len(pairs)
    assert mse_error(est, act) == pytest.approx(brute, rel=1e-12, abs=1e-12)


def test_progress_report_validation():
    ProgressReport(0.5, 0.01, 50.0)
    with pytest.raises(ValueError):
        ProgressReport(1.5, 0.01, 50.0)
    with pytest.raises(ValueError):
        ProgressReport(0.5, -0.01, 50.0)
    with pytest.raises(ValueError):
        ProgressReport(0.5, 0.01, -1.0)
