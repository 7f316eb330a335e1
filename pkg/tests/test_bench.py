from __future__ import annotations

import pytest

from stragglersim.bench import (
    CSV_HEADER,
    GIB,
    MIB,
    ExperimentSpec,
    MetricsRow,
    TteTaskRow,
    default_spec,
    emit_report,
    load_rows,
    load_task_rows,
    run_experiment,
    run_weights_experiment,
    two_regime_cluster,
    weight_mse,
)
from stragglersim.errors import ConfigurationError, DegenerateInputError
from stragglersim.learners.mlp import TrainConfig
from stragglersim.strategies import StrategyKind, StrategyParams
from stragglersim.taskmodel import Stage

SMALL = dict(
    node_counts=(2,),
    input_sizes=(256 * MIB,),
    seeds=(0,),
    warmups=2,
    params=StrategyParams(min_elapsed=5.0),
    train=TrainConfig(epochs=40),
)


def row(strategy="late", metric="makespan_s", value=10.0, seed=0) -> MetricsRow:
    return MetricsRow(strategy, "sort", 4, GIB, seed, metric, value)


def test_metrics_row_validation():
    with pytest.raises(ValueError):
        row(value=-1.0)
    with pytest.raises(ValueError):
        row(value=float("inf"))
    assert row(value=0.0).value == 0.0


def test_weight_mse_oracle():
    exact = [(0.5, 0.3, 0.2), (0.1, 0.6, 0.3)]
    assert weight_mse(exact, exact) == 0.0
    # flat mean over every component: ((0.1)^2 * 2 + 0 + ... ) / 6
    preds = [(0.6, 0.3, 0.2), (0.1, 0.6, 0.3)]
    assert weight_mse(preds, exact) == pytest.approx(0.01 * 1 / 6)
    with pytest.raises(DegenerateInputError):
        weight_mse([], [])


def test_two_regime_cluster_alternates_stage_speeds():
    nodes = two_regime_cluster(4)
    shuffle = [n.speed(Stage.REDUCE_SHUFFLE) for n in nodes]
    sort = [n.speed(Stage.REDUCE_SORT) for n in nodes]
    assert shuffle[0] > 1 > sort[0]
    assert shuffle[1] < 1 < sort[1]
    assert shuffle[2] > shuffle[0]  # within-regime tilt
    assert all(n.speed(Stage.MAP_COPY) == 1.0 for n in nodes)
    with pytest.raises(ConfigurationError):
        two_regime_cluster(0)


def test_default_spec_kinds():
    weights = default_spec("weights")
    assert weights.two_regime
    assert StrategyKind.NO_SPECULATE not in weights.strategies
    assert weights.straggler_fraction == 0.0
    makespan = default_spec("makespan")
    assert set(makespan.strategies) == set(StrategyKind)
    assert makespan.straggler_fraction == 0.25
    sweep = default_spec("sweep", node_counts=(2, 3))
    assert sweep.node_counts == (2, 3)
    with pytest.raises(ConfigurationError):
        default_spec("bogus")


def test_effective_seeds_spread_repetitions():
    spec = default_spec("makespan", seeds=(0, 1), repetitions=2)
    assert spec.effective_seeds() == (0, 1, 100000, 100001)


def test_spec_validation():
    with pytest.raises(ConfigurationError):
        default_spec("makespan", seeds=())
    with pytest.raises(ConfigurationError):
        default_spec("makespan", node_counts=(0,))
    with pytest.raises(ConfigurationError):
        default_spec("makespan", warmups=-1)
    with pytest.raises(ConfigurationError):
        default_spec("tte", tasks_per_phase=0)


def test_weights_experiment_scores_constant_predictor_against_realized():
    spec = default_spec("weights", strategies=(StrategyKind.LATE,), **SMALL)
    rows = run_weights_experiment(spec)
    by_metric = {r.metric: r for r in rows}
    assert set(by_metric) == {"weight_mse", "weight_mse_map", "weight_mse_reduce"}
    # constant weights on a two-regime cluster must miss by a wide margin
    assert by_metric["weight_mse_reduce"].value > 0.01
    combined, m, r = (
        by_metric["weight_mse"].value,
        by_metric["weight_mse_map"].value,
        by_metric["weight_mse_reduce"].value,
    )
    assert min(m, r) - 1e-12 <= combined <= max(m, r) + 1e-12


def test_makespan_experiment_emits_three_metrics_per_cell():
    spec = default_spec(
        "makespan",
        strategies=(StrategyKind.NO_SPECULATE, StrategyKind.LATE),
        two_regime=False,
        **SMALL,
    )
    rows, task_rows = run_experiment(spec)
    assert task_rows == []
    metrics = {(r.strategy, r.metric) for r in rows}
    for strategy in ("none", "late"):
        for metric in ("makespan_s", "decisions", "cancelled_work_s"):
            assert (strategy, metric) in metrics
    none_rows = [r for r in rows if r.strategy == "none"]
    assert all(r.value == 0.0 for r in none_rows if r.metric == "decisions")


def test_emit_report_writes_stable_bytes(tmp_path):
    rows = [row(seed=s, value=10.0 + s) for s in (0, 1)] + [
        row(strategy="none", seed=s, value=20.0) for s in (0, 1)
    ]
    first = tmp_path / "a"
    second = tmp_path / "b"
    emit_report(rows, first, figures=False)
    emit_report(list(reversed(rows)), second, figures=False)
    assert (first / "rows.csv").read_bytes() == (second / "rows.csv").read_bytes()
    assert (first / "summary.txt").read_bytes() == (second / "summary.txt").read_bytes()

    text = (first / "rows.csv").read_text()
    lines = text.splitlines()
    assert lines[0] == CSV_HEADER
    assert len(lines) == 5
    assert text.endswith("\n")


def test_summary_reports_means_and_improvements(tmp_path):
    rows = [
        row(strategy="none", seed=0, value=100.0),
        row(strategy="none", seed=1, value=100.0),
        row(strategy="late", seed=0, value=70.0),
        row(strategy="late", seed=1, value=90.0),
    ]
    emit_report(rows, tmp_path, figures=False)
    summary = (tmp_path / "summary.txt").read_text()
    assert "none: 100 +- 0 (n=2)" in summary
    assert "late: 80 +- 10 (n=2)" in summary
    # (100 - 80) / 100 = +20% faster than the no-speculation baseline
    assert "vs none: late +20.00%" in summary


def test_emit_report_rejects_empty_rows(tmp_path):
    with pytest.raises(DegenerateInputError):
        emit_report([], tmp_path, figures=False)


def test_rows_roundtrip(tmp_path):
    rows = [row(seed=s, metric=m, value=float(s + 1)) for s in (0, 1) for m in ("makespan_s", "decisions")]
    emit_report(rows, tmp_path, figures=False)
    loaded = load_rows(tmp_path / "rows.csv")
    assert loaded == sorted(rows, key=lambda r: r.key())
    bad = tmp_path / "bad.csv"
    bad.write_text("wrong,header\n1,2\n")
    with pytest.raises(ConfigurationError):
        load_rows(bad)


def test_task_rows_roundtrip(tmp_path):
    task_rows = [
        TteTaskRow("late", "sort", 4, GIB, 0, "map", "m000", 12.5, 11.0),
        TteTaskRow("nn", "sort", 4, GIB, 0, "reduce", "r001", 3.25, 3.5),
    ]
    emit_report([row()], tmp_path, task_rows=task_rows, figures=False)
    loaded = load_task_rows(tmp_path / "tte_tasks.csv")
    assert loaded == sorted(task_rows, key=lambda r: r.key())


def test_figures_are_rendered_when_requested(tmp_path):
    rows = [row(strategy=s, seed=0, value=v) for s, v in (("none", 30.0), ("late", 20.0))]
    files = emit_report(rows, tmp_path, figures=True)
    png = tmp_path / "makespan.png"
    assert png in files
    assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
