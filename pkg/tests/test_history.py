from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stragglersim.history import HistoryStore
from stragglersim.taskmodel import Phase

from conftest import make_record


def test_append_bumps_version_and_orders_by_finish_time():
    store = HistoryStore()
    assert store.version == 0
    late = make_record("n00", Phase.MAP, (5.0, 1.0), finished_at=100.0)
    early = make_record("n00", Phase.MAP, (3.0, 1.0), finished_at=10.0)
    store.append(late)
    store.append(early)
    assert store.version == 2
    rows = store.records_for_node("n00")
    assert [r.finished_at for r in rows] == [10.0, 100.0]


def test_phase_filter_and_node_listing():
    store = HistoryStore()
    store.append(make_record("nb", Phase.MAP, (1.0, 1.0)))
    store.append(make_record("na", Phase.REDUCE, (1.0, 1.0, 2.0)))
    store.append(make_record("na", Phase.MAP, (2.0, 2.0)))
    assert store.node_ids() == ["na", "nb"]
    assert len(store.records_for_node("na", Phase.MAP)) == 1
    assert len(store.records_for_node("na")) == 2
    assert store.records_for_node("missing") == []
    assert [r.phase for r in store.all_records(Phase.REDUCE)] == [Phase.REDUCE]
    assert len(store.all_records()) == 3


def test_record_cap_keeps_most_recent():
    store = HistoryStore(max_records_per_node=2)
    for i in range(5):
        store.append(make_record("n00", Phase.MAP, (1.0 + i, 1.0), finished_at=float(i)))
    rows = store.records_for_node("n00")
    assert len(rows) == 2
    assert [r.finished_at for r in rows] == [3.0, 4.0]


def test_copy_is_independent():
    store = HistoryStore()
    store.append(make_record("n00", Phase.MAP, (1.0, 1.0)))
    dup = store.copy()
    assert dup == store
    dup.append(make_record("n01", Phase.MAP, (2.0, 1.0)))
    assert len(store) == 1
    assert len(dup) == 2
    assert dup != store


def test_save_load_roundtrip(tmp_path):
    store = HistoryStore()
    store.append(make_record("n01", Phase.REDUCE, (2.0, 4.0, 2.0), finished_at=30.0))
    store.append(make_record("n00", Phase.MAP, (6.0, 2.0), finished_at=8.0))
    path = tmp_path / "hist.jsonl"
    store.save(path)
    loaded = HistoryStore.load(path)
    assert loaded == store
    assert len(loaded) == 2
    rec = loaded.records_for_node("n01")[0]
    assert rec.phase is Phase.REDUCE
    assert rec.weights == pytest.approx((0.25, 0.5, 0.25))


def test_saved_bytes_are_stable(tmp_path):
    store = HistoryStore()
    for i in range(4):
        store.append(make_record(f"n{i % 2}", Phase.MAP, (1.0 + i, 2.0), finished_at=float(i)))
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    store.save(a)
    HistoryStore.load(a).save(b)
    assert a.read_bytes() == b.read_bytes()


def test_load_applies_cap(tmp_path):
    store = HistoryStore()
    for i in range(6):
        store.append(make_record("n00", Phase.MAP, (1.0, 1.0), finished_at=float(i)))
    path = tmp_path / "hist.jsonl"
    store.save(path)
    capped = HistoryStore.load(path, max_records_per_node=3)
    assert len(capped) == 3
    assert capped.records_for_node("n00")[0].finished_at == 3.0


@settings(max_examples=25, deadline=None)
@given(
    rows=st.lists(
        st.tuples(
            st.sampled_from(["n00", "n01", "n02"]),
            st.sampled_from([Phase.MAP, Phase.REDUCE]),
            st.floats(0.1, 50.0),
            st.floats(0.0, 1e4),
        ),
        min_size=0,
        max_size=12,
    )
)
def test_random_store_roundtrips(tmp_path_factory, rows):
    store = HistoryStore()
    for node, phase, base, finished in rows:
        durations = (base, base / 2) if phase is Phase.MAP else (base, base / 2, base / 4)
        store.append(make_record(node, phase, durations, finished_at=finished))
    path = tmp_path_factory.mktemp("hist") / "h.jsonl"
    store.save(path)
    assert HistoryStore.load(path) == store
