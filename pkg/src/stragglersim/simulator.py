"""Discrete-event simulator of one MapReduce job on a heterogeneous cluster.

Tasks run as attempts on nodes with container slots. An attempt's per-stage
durations are drawn once at launch from a deterministic substream keyed by
(seed, task index, attempt index, stage index), so rerunning a configuration
reproduces the run bit for bit and the original attempts are identical across
strategies. Reduce tasks only launch after every map task has finished.

A pluggable strategy is evaluated at a fixed tick interval; its backup
decisions launch second attempts, and whichever attempt finishes first wins
while the loser is cancelled and its elapsed time booked as cancelled work.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from enum import IntEnum, Enum
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .history import HistoryStore
from .learners.estimator import NnEstimator
from .strategies import (
    ClusterView,
    SpeculationDecision,
    Strategy,
    StrategyKind,
    StrategyParams,
    make_strategy,
)
from .taskmodel import (
    DEFAULT_BLOCK_SIZE,
    ExecutionRecord,
    NodeSpec,
    Phase,
    Stage,
    TaskSnapshot,
    pairs_for_input,
    realized_weights_from_durations,
    stages_of,
)


class Workload(Enum):
    WORD_COUNT = "wordcount"
    SORT = "sort"


# Nominal seconds per stage for one full block of input on a speed-1.0 node:
# (map copy, map combine, shuffle, sort, reduce).
BASE_STAGE_SECONDS: dict[Workload, tuple[float, float, float, float, float]] = {
    Workload.WORD_COUNT: (8.0, 2.0, 6.0, 2.0, 2.0),
    Workload.SORT: (4.0, 1.0, 12.0, 6.0, 3.0),
}

_SIZE_SUFFIXES = {
    "k": 2**10,
    "m": 2**20,
    "g": 2**30,
    "t": 2**40,
}


def parse_size(text: str | int) -> int:
    """Parse a byte count like '256M', '1G', '128MB', or a plain integer."""
    if isinstance(text, int):
        return text
    s = text.strip().lower()
    if s.endswith("ib"):
        s = s[:-2]
    elif s.endswith("b"):
        s = s[:-1]
    mult = 1
    if s and s[-1] in _SIZE_SUFFIXES:
        mult = _SIZE_SUFFIXES[s[-1]]
        s = s[:-1]
    try:
        value = float(s)
    except ValueError as exc:
        raise ConfigurationError(f"cannot parse size {text!r}") from exc
    out = int(round(value * mult))
    if out <= 0:
        raise ConfigurationError(f"size must be positive: {text!r}")
    return out


def uniform_cluster(n: int, containers: int = 2, speed: float = 1.0) -> tuple[NodeSpec, ...]:
    """n identical nodes named n00, n01, ..."""
    if n < 1:
        raise ConfigurationError("cluster needs at least one node")
    return tuple(NodeSpec.uniform(f"n{i:02d}", speed, containers) for i in range(n))


def cluster_from_speeds(speeds: list[float] | tuple[float, ...], containers: int = 2) -> tuple[NodeSpec, ...]:
    """One node per entry, each uniform across stages at the given speed."""
    if not speeds:
        raise ConfigurationError("cluster needs at least one node")
    return tuple(
        NodeSpec.uniform(f"n{i:02d}", float(s), containers) for i, s in enumerate(speeds)
    )


def split_job(input_bytes: int, block_size: int = DEFAULT_BLOCK_SIZE) -> int:
    """Number of map tasks: one per (possibly partial) input block."""
    if input_bytes <= 0 or block_size <= 0:
        raise ConfigurationError("input_bytes and block_size must be > 0")
    return -(-input_bytes // block_size)


def stage_duration(
    workload: Workload,
    stage: Stage,
    task_input_bytes: int,
    node: NodeSpec,
    noise_draw: float = 0.0,
    block_size: int = DEFAULT_BLOCK_SIZE,
) -> float:
    """Seconds one stage takes: nominal * (bytes/block) / node speed * (1 + noise)."""
    if task_input_bytes <= 0:
        raise ConfigurationError("task_input_bytes must be > 0")
    if noise_draw <= -1:
        raise ConfigurationError("noise draw must be > -1")
    base = BASE_STAGE_SECONDS[workload][int(stage)]
    return base * (task_input_bytes / block_size) / node.speed(stage) * (1.0 + noise_draw)


@dataclass(frozen=True)
class ClusterConfig:
    """Everything that defines one simulated job and its cluster."""

    nodes: tuple[NodeSpec, ...]
    workload: Workload = Workload.WORD_COUNT
    input_bytes: int = 8 * DEFAULT_BLOCK_SIZE
    block_size: int = DEFAULT_BLOCK_SIZE
    noise: float = 0.1
    straggler_fraction: float = 0.0
    straggler_multiplier: float = 1.0
    seed: int = 0
    reduce_tasks: int | None = None
    tick_interval: float = 1.0

    def __post_init__(self) -> None:
        if not self.nodes:
            raise ConfigurationError("cluster needs at least one node")
        ids = [n.node_id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ConfigurationError("node ids must be unique")
        if self.input_bytes <= 0 or self.block_size <= 0:
            raise ConfigurationError("input_bytes and block_size must be > 0")
        if not 0 <= self.noise < 1:
            raise ConfigurationError("noise amplitude must lie in [0, 1)")
        if not 0 <= self.straggler_fraction < 1:
            raise ConfigurationError("straggler_fraction must lie in [0, 1)")
        if not 0 < self.straggler_multiplier <= 1:
            raise ConfigurationError("straggler_multiplier must lie in (0, 1]")
        if self.reduce_tasks is not None and self.reduce_tasks < 1:
            raise ConfigurationError("reduce_tasks must be >= 1")
        if self.tick_interval <= 0:
            raise ConfigurationError("tick_interval must be > 0")

    def effective_nodes(self) -> tuple[NodeSpec, ...]:
        """Nodes in id order, with the last floor(fraction * N) slowed down."""
        ordered = sorted(self.nodes, key=lambda n: n.node_id)
        slow_count = math.floor(self.straggler_fraction * len(ordered))
        if slow_count == 0 or self.straggler_multiplier == 1.0:
            return tuple(ordered)
        out = list(ordered)
        for i in range(len(out) - slow_count, len(out)):
            n = out[i]
            factors = tuple(s * self.straggler_multiplier for s in n.speed_factors)
            out[i] = NodeSpec(n.node_id, factors, n.containers)
        return tuple(out)

    @property
    def n_map_tasks(self) -> int:
        return split_job(self.input_bytes, self.block_size)

    @property
    def n_reduce_tasks(self) -> int:
        return self.reduce_tasks if self.reduce_tasks is not None else len(self.nodes)

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> "ClusterConfig":
        """Read key=value lines; '#' starts a comment. Keyword overrides win.

        Keys: nodes, containers, speed, node_speeds (comma separated), workload,
        input_bytes (size suffixes allowed), block_size, noise,
        straggler_fraction, straggler_multiplier, seed, reduce_tasks,
        tick_interval.
        """
        raw: dict[str, str] = {}
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            raw[key.strip()] = value.strip()
        kwargs: dict = {}
        containers = int(raw.pop("containers", 2))
        if "node_speeds" in raw:
            speeds = [float(s) for s in raw.pop("node_speeds").split(",") if s.strip()]
            kwargs["nodes"] = cluster_from_speeds(speeds, containers)
            raw.pop("nodes", None)
            raw.pop("speed", None)
        else:
            n = int(raw.pop("nodes", 1))
            speed = float(raw.pop("speed", 1.0))
            kwargs["nodes"] = uniform_cluster(n, containers, speed)
        known = {
            "workload": lambda v: Workload(v),
            "input_bytes": parse_size,
            "input_size": parse_size,
            "block_size": parse_size,
            "noise": float,
            "straggler_fraction": float,
            "straggler_multiplier": float,
            "seed": int,
            "reduce_tasks": int,
            "tick_interval": float,
        }
        for key, value in raw.items():
            if key not in known:
                raise ConfigurationError(f"unknown config key {key!r} in {path}")
            kwargs["input_bytes" if key == "input_size" else key] = known[key](value)
        kwargs.update(overrides)
        return cls(**kwargs)


class EventKind(IntEnum):
    """Processed in timestamp order; the ordinal breaks timestamp ties."""

    TASK_STAGE_COMPLETE = 0
    STRATEGY_TICK = 1
    TASK_LAUNCH = 2
    BACKUP_LAUNCH = 3
    TASK_CANCEL = 4
    JOB_COMPLETE = 5


@dataclass(frozen=True)
class SimEvent:
    timestamp: float
    kind: EventKind
    task_id: str = ""


@dataclass(frozen=True)
class AttemptRecord:
    """One attempt's full trajectory; enough to reconstruct any past snapshot."""

    task_id: str
    phase: Phase
    node_id: str
    input_bytes: int
    total_pairs: int
    start: float
    durations: tuple[float, ...]
    is_backup: bool
    completed: bool
    cancelled_at: float | None


@dataclass(frozen=True)
class EstimateSample:
    """One strategy-tick estimate for one task, with the realized remaining time."""

    clock: float
    task_id: str
    phase: Phase
    node_id: str
    progress: float
    rate: float
    tte: float
    realized_remaining: float


@dataclass(frozen=True)
class CapSample:
    clock: float
    running_backups: int
    cap_limit: float
    running_tasks: int
    total_tasks: int


@dataclass(frozen=True)
class DroppedDecision:
    clock: float
    task_id: str


@dataclass(frozen=True)
class SimResult:
    strategy: str
    makespan: float
    records: tuple[ExecutionRecord, ...]
    attempts: tuple[AttemptRecord, ...]
    estimates: tuple[EstimateSample, ...]
    decisions: tuple[SpeculationDecision, ...]
    dropped: tuple[DroppedDecision, ...]
    cancelled_work_s: float
    cap_trace: tuple[CapSample, ...]
    n_map_tasks: int
    n_reduce_tasks: int


def snapshot_from_attempt(
    task_id: str,
    phase: Phase,
    node_id: str,
    input_bytes: int,
    total_pairs: int,
    start: float,
    durations: tuple[float, ...],
    clock: float,
) -> TaskSnapshot | None:
    """The snapshot an attempt would report at ``clock``, or None if not running.

    Map tasks report pairs processed across the whole phase; reduce tasks
    report pairs within the current stage (the count conceptually resets at
    each stage boundary).
    """
    elapsed = clock - start
    total = sum(durations)
    if elapsed < 0 or elapsed >= total:
        return None
    stages = stages_of(phase)
    acc = 0.0
    current = stages[-1]
    within = 1.0
    for st, d in zip(stages, durations):
        if d > 0 and elapsed < acc + d:
            current = st
            within = (elapsed - acc) / d
            break
        acc += d
    if phase is Phase.MAP:
        frac = elapsed / total
    else:
        frac = within
    processed = min(total_pairs, math.floor(frac * total_pairs))
    return TaskSnapshot(
        task_id=task_id,
        phase=phase,
        current_stage=current,
        processed_pairs=processed,
        total_pairs=total_pairs,
        elapsed_time=elapsed,
        input_bytes=input_bytes,
        node_id=node_id,
    )


def snapshots_at(
    attempts: tuple[AttemptRecord, ...] | list[AttemptRecord],
    clock: float,
    include_backups: bool = False,
) -> tuple[TaskSnapshot, ...]:
    """Reconstruct the running-task snapshots of a finished run at ``clock``."""
    out = []
    for a in attempts:
        if a.is_backup and not include_backups:
            continue
        if a.cancelled_at is not None and clock >= a.cancelled_at:
            continue
        snap = snapshot_from_attempt(
            a.task_id, a.phase, a.node_id, a.input_bytes, a.total_pairs,
            a.start, a.durations, clock,
        )
        if snap is not None:
            out.append(snap)
    return tuple(sorted(out, key=lambda s: s.task_id))


@dataclass
class _Attempt:
    task: "_Task"
    attempt_index: int
    node_id: str
    start: float
    durations: tuple[float, ...]
    completed: bool = False
    cancelled_at: float | None = None

    @property
    def end(self) -> float:
        return self.start + sum(self.durations)

    @property
    def running(self) -> bool:
        return not self.completed and self.cancelled_at is None

    @property
    def is_backup(self) -> bool:
        return self.attempt_index > 0

    def to_record(self) -> AttemptRecord:
        return AttemptRecord(
            task_id=self.task.task_id,
            phase=self.task.phase,
            node_id=self.node_id,
            input_bytes=self.task.input_bytes,
            total_pairs=self.task.total_pairs,
            start=self.start,
            durations=self.durations,
            is_backup=self.is_backup,
            completed=self.completed,
            cancelled_at=self.cancelled_at,
        )


@dataclass
class _Task:
    task_id: str
    index: int
    phase: Phase
    input_bytes: int
    total_pairs: int
    attempts: list[_Attempt] = field(default_factory=list)
    finished_at: float | None = None

    @property
    def finished(self) -> bool:
        return self.finished_at is not None

    @property
    def original(self) -> _Attempt:
        return self.attempts[0]

    def live_backup(self) -> _Attempt | None:
        for a in self.attempts[1:]:
            if a.running:
                return a
        return None


class _EventLog:
    """Buffers same-timestamp events and flushes them ordered by (kind, task_id)."""

    def __init__(self, sink: list[SimEvent] | None):
        self.sink = sink
        self._ts: float | None = None
        self._buf: list[SimEvent] = []

    def add(self, ts: float, kind: EventKind, task_id: str = "") -> None:
        if self.sink is None:
            return
        if self._ts is not None and ts != self._ts:
            self.flush()
        self._ts = ts
        self._buf.append(SimEvent(ts, kind, task_id))

    def flush(self) -> None:
        if self.sink is None or not self._buf:
            return
        self._buf.sort(key=lambda e: (int(e.kind), e.task_id))
        self.sink.extend(self._buf)
        self._buf = []


def _attempt_durations(
    config: ClusterConfig,
    task: _Task,
    attempt_index: int,
    node: NodeSpec,
) -> tuple[float, ...]:
    # one noise substream per stage so draws do not depend on evaluation order
    out = []
    for si, stage in enumerate(stages_of(task.phase)):
        if config.noise > 0:
            rng = np.random.default_rng([config.seed, task.index, attempt_index, si])
            draw = float(rng.uniform(-config.noise, config.noise))
        else:
            draw = 0.0
        out.append(
            stage_duration(
                config.workload, stage, task.input_bytes, node, draw, config.block_size
            )
        )
    return tuple(out)


def run_simulation(
    config: ClusterConfig,
    strategy: Strategy | StrategyKind | str = StrategyKind.NO_SPECULATE,
    params: StrategyParams | None = None,
    history: HistoryStore | None = None,
    estimator: NnEstimator | None = None,
    job_id: str = "job0",
    event_log: list[SimEvent] | None = None,
) -> SimResult:
    """Simulate one job to completion and return its full deterministic trace.

    ``history`` is both read by weight-based strategies and extended with this
    job's winning attempts as they finish.
    """
    if not isinstance(strategy, Strategy):
        strategy = make_strategy(strategy, params or StrategyParams(), estimator)
    nodes = config.effective_nodes()
    node_by_id = {n.node_id: n for n in nodes}
    free = {n.node_id: n.containers for n in nodes}

    n_map = config.n_map_tasks
    n_reduce = config.n_reduce_tasks
    tasks: dict[str, _Task] = {}
    pending: list[_Task] = []
    full_blocks = n_map - 1
    for i in range(n_map):
        tb = config.block_size if i < full_blocks else config.input_bytes - full_blocks * config.block_size
        t = _Task(
            task_id=f"m{i:03d}",
            index=i,
            phase=Phase.MAP,
            input_bytes=tb,
            total_pairs=pairs_for_input(tb, config.block_size),
        )
        tasks[t.task_id] = t
        pending.append(t)
    reduce_bytes = -(-config.input_bytes // n_reduce)
    pending_reduces: list[_Task] = []
    for i in range(n_reduce):
        t = _Task(
            task_id=f"r{i:03d}",
            index=n_map + i,
            phase=Phase.REDUCE,
            input_bytes=reduce_bytes,
            total_pairs=pairs_for_input(reduce_bytes, config.block_size),
        )
        tasks[t.task_id] = t
        pending_reduces.append(t)
    total_tasks = n_map + n_reduce

    heap: list[tuple] = []
    seq = 0
    log = _EventLog(event_log)

    def push(ts: float, kind: EventKind, tie: str, payload) -> None:
        nonlocal seq
        heapq.heappush(heap, (ts, int(kind), tie, seq, payload))
        seq += 1

    records: list[ExecutionRecord] = []
    all_attempts: list[_Attempt] = []
    estimates_raw: list[tuple[float, object]] = []
    decisions_log: list[SpeculationDecision] = []
    dropped_log: list[DroppedDecision] = []
    cap_trace: list[CapSample] = []
    cancelled_work = 0.0
    maps_left = n_map
    finished = 0
    makespan = 0.0

    def start_attempt(task: _Task, attempt_index: int, node_id: str, clock: float) -> None:
        node = node_by_id[node_id]
        durations = _attempt_durations(config, task, attempt_index, node)
        attempt = _Attempt(task, attempt_index, node_id, clock, durations)
        task.attempts.append(attempt)
        all_attempts.append(attempt)
        assert free[node_id] > 0, "launch without a free container"
        free[node_id] -= 1
        acc = clock
        for pos, d in enumerate(durations):
            acc += d
            push(acc, EventKind.TASK_STAGE_COMPLETE, task.task_id, (attempt, pos))
        log.add(clock, EventKind.BACKUP_LAUNCH if attempt_index else EventKind.TASK_LAUNCH, task.task_id)

    def try_launch(clock: float) -> None:
        # reduce tasks wait behind the map barrier
        if pending:
            queue = pending
        elif maps_left == 0:
            queue = pending_reduces
        else:
            return
        while queue:
            open_nodes = [nid for nid in free if free[nid] > 0]
            if not open_nodes:
                return
            nid = min(open_nodes, key=lambda n: (-free[n], n))
            start_attempt(queue.pop(0), 0, nid, clock)

    try_launch(0.0)
    push(config.tick_interval, EventKind.STRATEGY_TICK, "", None)

    while heap:
        ts, kind_ord, tie, _, payload = heapq.heappop(heap)
        kind = EventKind(kind_ord)
        if kind is EventKind.TASK_STAGE_COMPLETE:
            attempt, pos = payload
            if not attempt.running or attempt.task.finished:
                continue
            log.add(ts, EventKind.TASK_STAGE_COMPLETE, attempt.task.task_id)
            if pos < len(attempt.durations) - 1:
                continue
            # final stage: this attempt wins the task
            task = attempt.task
            attempt.completed = True
            task.finished_at = ts
            free[attempt.node_id] += 1
            for other in task.attempts:
                if other is not attempt and other.running:
                    other.cancelled_at = ts
                    free[other.node_id] += 1
                    cancelled_work += ts - other.start
                    log.add(ts, EventKind.TASK_CANCEL, task.task_id)
            record = ExecutionRecord(
                job_id=job_id,
                task_id=task.task_id,
                node_id=attempt.node_id,
                phase=task.phase,
                input_bytes=task.input_bytes,
                stage_durations=attempt.durations,
                weights=realized_weights_from_durations(attempt.durations),
                total_time=sum(attempt.durations),
                finished_at=ts,
            )
            records.append(record)
            if history is not None:
                history.append(record)
            finished += 1
            if task.phase is Phase.MAP:
                maps_left -= 1
            if finished == total_tasks:
                makespan = ts
                log.add(ts, EventKind.JOB_COMPLETE)
                break
            try_launch(ts)
        elif kind is EventKind.STRATEGY_TICK:
            running_backups = sum(
                1 for t in tasks.values() if not t.finished and t.live_backup() is not None
            )
            running_tasks = sum(1 for t in tasks.values() if t.attempts and not t.finished)
            if strategy.kind is StrategyKind.NO_SPECULATE:
                cap_trace.append(CapSample(ts, running_backups, 0.0, running_tasks, total_tasks))
            else:
                snaps = tuple(
                    s
                    for s in (
                        snapshot_from_attempt(
                            t.task_id, t.phase, t.original.node_id, t.input_bytes,
                            t.total_pairs, t.original.start, t.original.durations, ts,
                        )
                        for t in sorted(tasks.values(), key=lambda t: t.task_id)
                        if t.attempts and not t.finished
                    )
                    if s is not None
                )
                view = ClusterView(
                    clock=ts,
                    job_id=job_id,
                    total_tasks=total_tasks,
                    snapshots=snaps,
                    nodes=nodes,
                    free_containers=dict(free),
                    running_backups=running_backups,
                    backed_up=frozenset(
                        t.task_id for t in tasks.values() if not t.finished and t.live_backup()
                    ),
                    completed=tuple(records),
                    total_phase_tasks={Phase.MAP: n_map, Phase.REDUCE: n_reduce},
                )
                outcome = strategy.evaluate(view, history)
                for e in outcome.estimates:
                    estimates_raw.append((ts, e))
                for d in outcome.decisions:
                    task = tasks[d.task_id]
                    if task.finished or task.live_backup() is not None:
                        continue
                    start_attempt(task, len(task.attempts), d.target_node_id, ts)
                    decisions_log.append(d)
                dropped_log.extend(DroppedDecision(ts, tid) for tid in outcome.dropped)
                running_backups = sum(
                    1 for t in tasks.values() if not t.finished and t.live_backup() is not None
                )
                cap_trace.append(
                    CapSample(ts, running_backups, outcome.cap_limit, running_tasks, total_tasks)
                )
            push(ts + config.tick_interval, EventKind.STRATEGY_TICK, "", None)

    log.flush()
    estimates = tuple(
        EstimateSample(
            clock=ts,
            task_id=e.task_id,
            phase=e.phase,
            node_id=e.node_id,
            progress=e.progress,
            rate=e.rate,
            tte=e.tte,
            realized_remaining=tasks[e.task_id].finished_at - ts,
        )
        for ts, e in estimates_raw
    )
    return SimResult(
        strategy=strategy.kind.value,
        makespan=makespan,
        records=tuple(records),
        attempts=tuple(a.to_record() for a in all_attempts),
        estimates=estimates,
        decisions=tuple(decisions_log),
        dropped=tuple(dropped_log),
        cancelled_work_s=cancelled_work,
        cap_trace=tuple(cap_trace),
        n_map_tasks=n_map,
        n_reduce_tasks=n_reduce,
    )
