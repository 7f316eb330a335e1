"""Persistent per-node store of completed-task records.

The store feeds every estimator that learns from the past: per-node weight
lookups, k-means clustering, and the neural models. File format is one JSON
object per line with fixed field names; saving is canonical (nodes sorted,
records in stored order) so identical stores produce identical bytes.
"""

from __future__ import annotations

import json
from bisect import insort
from pathlib import Path

from .taskmodel import ExecutionRecord, Phase

_FIELDS = (
    "job_id",
    "task_id",
    "node_id",
    "phase",
    "input_bytes",
    "stage_durations",
    "weights",
    "total_time",
    "finished_at",
)


class HistoryStore:
    """node_id -> records ordered by finished_at. Append is the only mutation."""

    def __init__(self, max_records_per_node: int | None = None):
        if max_records_per_node is not None and max_records_per_node < 1:
            raise ValueError("max_records_per_node must be >= 1 or None")
        self._records: dict[str, list[ExecutionRecord]] = {}
        self.max_records_per_node = max_records_per_node
        # bumped on every append so derived models can cache against a snapshot
        self.version = 0

    def append(self, record: ExecutionRecord) -> None:
        rows = self._records.setdefault(record.node_id, [])
        insort(rows, record, key=lambda r: r.finished_at)
        if self.max_records_per_node is not None and len(rows) > self.max_records_per_node:
            del rows[0]
        self.version += 1

    def records_for_node(self, node_id: str, phase: Phase | None = None) -> list[ExecutionRecord]:
        rows = self._records.get(node_id, [])
        if phase is None:
            return list(rows)
        return [r for r in rows if r.phase is phase]

    def all_records(self, phase: Phase | None = None) -> list[ExecutionRecord]:
        out: list[ExecutionRecord] = []
        for node_id in sorted(self._records):
            out.extend(r for r in self._records[node_id] if phase is None or r.phase is phase)
        return out

    def node_ids(self) -> list[str]:
        return sorted(self._records)

    def copy(self) -> "HistoryStore":
        """Independent store with the same records; appends do not propagate."""
        out = HistoryStore(self.max_records_per_node)
        out._records = {node: list(rows) for node, rows in self._records.items()}
        out.version = self.version
        return out

    def __len__(self) -> int:
        return sum(len(rows) for rows in self._records.values())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, HistoryStore):
            return NotImplemented
        return self._records == other._records

    def save(self, path: str | Path) -> None:
        lines = []
        for node_id in sorted(self._records):
            for r in self._records[node_id]:
                row = {
                    "job_id": r.job_id,
                    "task_id": r.task_id,
                    "node_id": r.node_id,
                    "phase": r.phase.value,
                    "input_bytes": r.input_bytes,
                    "stage_durations": list(r.stage_durations),
                    "weights": list(r.weights),
                    "total_time": r.total_time,
                    "finished_at": r.finished_at,
                }
                lines.append(json.dumps(row, separators=(",", ":")))
        Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))

    @classmethod
    def load(cls, path: str | Path, max_records_per_node: int | None = None) -> "HistoryStore":
        store = cls(max_records_per_node=max_records_per_node)
        text = Path(path).read_text()
        for line_no, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            row = json.loads(line)
            missing = [f for f in _FIELDS if f not in row]
            if missing:
                raise ValueError(f"{path}:{line_no} missing fields {missing}")
            store.append(
                ExecutionRecord(
                    job_id=row["job_id"],
                    task_id=row["task_id"],
                    node_id=row["node_id"],
                    phase=Phase(row["phase"]),
                    input_bytes=int(row["input_bytes"]),
                    stage_durations=tuple(float(d) for d in row["stage_durations"]),
                    weights=tuple(float(w) for w in row["weights"]),
                    total_time=float(row["total_time"]),
                    finished_at=float(row["finished_at"]),
                )
            )
        return store
