"""Speculative-execution strategies: who is a straggler, and where to back it up.

All detectors share one shape: score each judged running task (progress, rate,
estimated remaining time), pick stragglers by the strategy's own rule, rank them
by remaining time descending (ties by task id), and assign each a backup target
that is not the task's own node, not in the slow-node set, and has a free
container. They differ in where stage weights come from:

* naive and LATE use the constant weights (1, 0) / (1/3, 1/3, 1/3)
* SAMR uses each node's most recent completed task in the same phase
* ESAMR clusters all historical weights and picks each node a centroid through
  the current job's completed tasks on that node
* the neural strategy asks per-node networks for map remaining time and reduce
  stage weights, falling back to the constants where a node has no model
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping

from .errors import ConfigurationError, NoBackupTargetError
from .history import HistoryStore
from .learners.estimator import (
    NnEstimator,
    predict_map_remaining,
    predict_reduce_weights,
)
from .learners.kmeans import KmeansModel, kmeans_fit, kmeans_nearest
from .progress import (
    average_rate,
    average_tte,
    map_progress,
    progress_rate,
    sub_progress,
    time_to_end,
    weighted_reduce_progress,
)
from .taskmodel import (
    ExecutionRecord,
    NodeSpec,
    Phase,
    StageWeights,
    TaskSnapshot,
)


class StrategyKind(Enum):
    NO_SPECULATE = "none"
    NAIVE = "naive"
    LATE = "late"
    SAMR = "samr"
    ESAMR = "esamr"
    NN = "nn"


CONSTANT_WEIGHTS = StageWeights.naive()


@dataclass(frozen=True)
class StrategyParams:
    """Tunables shared by every detector; defaults match the common settings."""

    speculative_cap: float = 0.10
    bp: float = 0.2
    stt: float = 0.4
    stac: float = 0.2
    k: int = 10
    min_elapsed: float = 60.0
    esamr_completion_fraction: float = 0.20
    naive_gap: float = 0.2
    slow_node_fraction: float = 0.25
    esamr_seed: int = 0

    def __post_init__(self) -> None:
        if not 0 < self.speculative_cap <= 1:
            raise ConfigurationError("speculative_cap must lie in (0, 1]")
        if not 0 < self.bp <= 1:
            raise ConfigurationError("bp must lie in (0, 1]")
        if self.stt < 0:
            raise ConfigurationError("stt must be >= 0")
        if not 0 <= self.stac < 1:
            raise ConfigurationError("stac must lie in [0, 1)")
        if self.k < 1:
            raise ConfigurationError("k must be >= 1")
        if self.min_elapsed < 0:
            raise ConfigurationError("min_elapsed must be >= 0")
        if not 0 < self.esamr_completion_fraction <= 1:
            raise ConfigurationError("esamr_completion_fraction must lie in (0, 1]")
        if not 0 <= self.naive_gap < 1:
            raise ConfigurationError("naive_gap must lie in [0, 1)")
        if not 0 <= self.slow_node_fraction < 1:
            raise ConfigurationError("slow_node_fraction must lie in [0, 1)")


@dataclass(frozen=True)
class SpeculationDecision:
    """One backup launch order issued by a detector."""

    task_id: str
    target_node_id: str
    estimated_tte: float
    decided_at: float

    def __post_init__(self) -> None:
        if self.estimated_tte < 0:
            raise ValueError("estimated_tte must be >= 0")
        if self.decided_at < 0:
            raise ValueError("decided_at must be >= 0")


@dataclass(frozen=True)
class ClusterView:
    """Everything a detector may look at during one evaluation instant."""

    clock: float
    job_id: str
    total_tasks: int
    snapshots: tuple[TaskSnapshot, ...]
    nodes: tuple[NodeSpec, ...]
    free_containers: Mapping[str, int]
    running_backups: int
    backed_up: frozenset[str]
    completed: tuple[ExecutionRecord, ...] = ()
    total_phase_tasks: Mapping[Phase, int] = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.total_phase_tasks is None:
            object.__setattr__(self, "total_phase_tasks", {Phase.MAP: 0, Phase.REDUCE: 0})


@dataclass(frozen=True)
class TaskEstimate:
    """A judged task's derived progress, rate, and remaining-time estimate."""

    snapshot: TaskSnapshot
    progress: float
    rate: float
    tte: float

    @property
    def task_id(self) -> str:
        return self.snapshot.task_id

    @property
    def node_id(self) -> str:
        return self.snapshot.node_id

    @property
    def phase(self) -> Phase:
        return self.snapshot.phase


def judged_snapshots(
    snapshots: tuple[TaskSnapshot, ...] | list[TaskSnapshot], params: StrategyParams
) -> list[TaskSnapshot]:
    """Tasks old enough to be scored; brand-new tasks are never judged."""
    return [s for s in snapshots if s.elapsed_time > 0 and s.elapsed_time >= params.min_elapsed]


class WeightResolver:
    """Per-node stage weights for one evaluation instant of one strategy.

    ESAMR's k-means model is cached against the history store's version counter
    so repeated evaluations over an unchanged history do not refit.
    """

    def __init__(
        self,
        kind: StrategyKind,
        history: HistoryStore | None,
        params: StrategyParams,
        completed: tuple[ExecutionRecord, ...] = (),
        total_phase_tasks: Mapping[Phase, int] | None = None,
        cache: dict | None = None,
    ):
        self.kind = kind
        self.history = history
        self.params = params
        self.completed = completed
        self.total_phase_tasks = dict(total_phase_tasks or {})
        self.cache = cache if cache is not None else {}
        self._memo: dict[tuple[str, Phase], tuple[float, ...]] = {}

    def reduce_weights(self, node_id: str) -> StageWeights:
        r = self.phase_weights(node_id, Phase.REDUCE)
        return StageWeights(1.0, 0.0, *r)

    def map_weights(self, node_id: str) -> tuple[float, float]:
        w = self.phase_weights(node_id, Phase.MAP)
        return (w[0], w[1])

    def phase_weights(self, node_id: str, phase: Phase) -> tuple[float, ...]:
        key = (node_id, phase)
        if key not in self._memo:
            self._memo[key] = self._resolve(node_id, phase)
        return self._memo[key]

    def _resolve(self, node_id: str, phase: Phase) -> tuple[float, ...]:
        constants = CONSTANT_WEIGHTS.for_phase(phase)
        if self.kind in (
            StrategyKind.NAIVE,
            StrategyKind.LATE,
            StrategyKind.NO_SPECULATE,
            StrategyKind.NN,
        ):
            # The network predicts reduce weights directly; the resolver is
            # only consulted for nodes it has no model for.
            return constants
        if self.kind is StrategyKind.SAMR:
            rows = self.history.records_for_node(node_id, phase) if self.history else []
            return rows[-1].weights if rows else constants
        if self.kind is StrategyKind.ESAMR:
            return self._esamr_weights(node_id, phase)
        raise ConfigurationError(f"no weight resolution rule for {self.kind}")

    def _esamr_weights(self, node_id: str, phase: Phase) -> tuple[float, ...]:
        model = self._esamr_model(phase)
        if model is None:
            return CONSTANT_WEIGHTS.for_phase(phase)
        done = [r for r in self.completed if r.phase is phase]
        total = self.total_phase_tasks.get(phase, 0)
        threshold_met = (
            total > 0 and len(done) >= self.params.esamr_completion_fraction * total
        )
        mine = [r for r in done if r.node_id == node_id]
        if threshold_met and mine:
            dims = len(mine[0].weights)
            temp = tuple(
                sum(r.weights[i] for r in mine) / len(mine) for i in range(dims)
            )
            centroid = model.centroids[kmeans_nearest(model, temp)]
        else:
            centroid = model.centroids.mean(axis=0)
        return tuple(float(c) for c in centroid)

    def _esamr_model(self, phase: Phase) -> KmeansModel | None:
        if self.history is None:
            return None
        rows = self.history.all_records(phase)
        if not rows:
            return None
        key = (self.history.version, phase)
        if key not in self.cache:
            # drop models fitted against older history versions
            for stale in [k for k in self.cache if k[0] != self.history.version]:
                del self.cache[stale]
            points = [r.weights for r in rows]
            self.cache[key] = kmeans_fit(points, k=self.params.k, seed=self.params.esamr_seed)
        return self.cache[key]


def estimate_tasks(
    kind: StrategyKind,
    view: ClusterView,
    history: HistoryStore | None = None,
    estimator: NnEstimator | None = None,
    params: StrategyParams = StrategyParams(),
    cache: dict | None = None,
) -> list[TaskEstimate]:
    """Score every judged running task under the given strategy's weights.

    Map progress is always processed/total pairs over the whole phase; the
    strategies differ only in reduce stage weights and, for the neural
    strategy, in where the map remaining-time figure comes from.
    """
    resolver = WeightResolver(
        kind, history, params, view.completed, view.total_phase_tasks, cache
    )
    out: list[TaskEstimate] = []
    for snap in judged_snapshots(view.snapshots, params):
        if snap.phase is Phase.MAP:
            ps = map_progress(snap)
            rate = progress_rate(ps, snap.elapsed_time)
            tte = time_to_end(ps, rate)
            if kind is StrategyKind.NN and estimator is not None and ps < 1:
                learned = predict_map_remaining(estimator, snap.node_id, ps, snap.processed_pairs)
                if learned is not None:
                    tte = max(0.0, learned)
        else:
            subps = sub_progress(snap.processed_pairs, snap.total_pairs)
            weights = None
            if kind is StrategyKind.NN and estimator is not None:
                weights = predict_reduce_weights(
                    estimator,
                    snap.node_id,
                    snap.input_bytes,
                    sub_progress=subps,
                    processed_pairs=snap.processed_pairs,
                )
            if weights is None:
                weights = resolver.reduce_weights(snap.node_id)
            ps = weighted_reduce_progress(weights, snap.current_stage, subps)
            rate = progress_rate(ps, snap.elapsed_time)
            tte = time_to_end(ps, rate)
        out.append(TaskEstimate(snapshot=snap, progress=ps, rate=rate, tte=tte))
    return out


def slow_node_ids(
    estimates: list[TaskEstimate],
    nodes: tuple[NodeSpec, ...],
    fraction: float,
) -> frozenset[str]:
    """The bottom fraction of the cluster by mean judged-task progress rate.

    Only nodes currently running at least one judged task can be slow; the
    count is floor(fraction * total nodes) regardless of how many are busy.
    """
    count = math.floor(fraction * len(nodes))
    if count <= 0:
        return frozenset()
    rates: dict[str, list[float]] = {}
    for e in estimates:
        rates.setdefault(e.node_id, []).append(e.rate)
    busy = sorted(rates, key=lambda n: (average_rate(rates[n]), n))
    return frozenset(busy[:count])


def select_backup_node(
    nodes: tuple[NodeSpec, ...],
    slow: frozenset[str],
    original_node_id: str,
    free_containers: Mapping[str, int],
) -> str:
    """Fastest non-slow node with a free container, excluding the task's own.

    Ties break on lowest node id. Raises NoBackupTargetError when nothing
    qualifies; callers record the decision as dropped.
    """
    eligible = [
        n
        for n in nodes
        if n.node_id != original_node_id
        and n.node_id not in slow
        and free_containers.get(n.node_id, 0) > 0
    ]
    if not eligible:
        raise NoBackupTargetError(f"no backup target for a task on {original_node_id}")
    best = min(eligible, key=lambda n: (-n.mean_speed, n.node_id))
    return best.node_id


def _assign_targets(
    view: ClusterView,
    candidates: list[TaskEstimate],
    all_estimates: list[TaskEstimate],
    params: StrategyParams,
    can_emit: Callable[[int], bool],
    dropped: list[str] | None,
) -> list[SpeculationDecision]:
    """Walk ranked candidates, consuming container budget and the backup cap."""
    slow = slow_node_ids(all_estimates, view.nodes, params.slow_node_fraction)
    free = dict(view.free_containers)
    decisions: list[SpeculationDecision] = []
    for e in candidates:
        if not can_emit(len(decisions)):
            break
        try:
            target = select_backup_node(view.nodes, slow, e.node_id, free)
        except NoBackupTargetError:
            if dropped is not None:
                dropped.append(e.task_id)
            continue
        free[target] -= 1
        decisions.append(
            SpeculationDecision(
                task_id=e.task_id,
                target_node_id=target,
                estimated_tte=e.tte,
                decided_at=view.clock,
            )
        )
    return decisions


def _ranked_candidates(
    estimates: list[TaskEstimate], backed_up: frozenset[str]
) -> list[TaskEstimate]:
    """Unfinished, not-yet-backed-up tasks, worst remaining time first."""
    cands = [e for e in estimates if e.tte > 0 and e.progress < 1 and e.task_id not in backed_up]
    return sorted(cands, key=lambda e: (-e.tte, e.task_id))


def concurrent_backup_cap(params: StrategyParams, total_tasks: int) -> int:
    """Job-wide concurrent backup bound: floor(cap fraction * job task count)."""
    return math.floor(params.speculative_cap * total_tasks)


def naive_detect(
    snapshots: tuple[TaskSnapshot, ...] | list[TaskSnapshot],
    params: StrategyParams = StrategyParams(),
) -> list[str]:
    """Task ids whose constant-weight progress trails the mean by the gap.

    A single judged task can never trail its own mean. Ids come back worst
    progress first so callers can assign scarce containers in that order.
    """
    scored: list[tuple[float, str]] = []
    for snap in judged_snapshots(snapshots, params):
        if snap.phase is Phase.MAP:
            ps = map_progress(snap)
        else:
            subps = sub_progress(snap.processed_pairs, snap.total_pairs)
            ps = weighted_reduce_progress(CONSTANT_WEIGHTS, snap.current_stage, subps)
        scored.append((ps, snap.task_id))
    if not scored:
        return []
    avg = sum(ps for ps, _ in scored) / len(scored)
    cut = (1.0 - params.naive_gap) * avg
    return [task_id for ps, task_id in sorted(scored) if ps < cut]


def late_detect(
    view: ClusterView,
    params: StrategyParams = StrategyParams(),
    dropped: list[str] | None = None,
    estimates: list[TaskEstimate] | None = None,
) -> list[SpeculationDecision]:
    """Constant-weight estimates, longest remaining time first, capped."""
    if estimates is None:
        estimates = estimate_tasks(StrategyKind.LATE, view, params=params)
    cap = concurrent_backup_cap(params, view.total_tasks)
    can_emit = lambda n: view.running_backups + n < cap  # noqa: E731
    cands = _ranked_candidates(estimates, view.backed_up)
    return _assign_targets(view, cands, estimates, params, can_emit, dropped)


def samr_detect(
    view: ClusterView,
    history: HistoryStore | None,
    params: StrategyParams = StrategyParams(),
    dropped: list[str] | None = None,
    estimates: list[TaskEstimate] | None = None,
) -> list[SpeculationDecision]:
    """Per-node historical weights; slow by rate and by remaining-time excess.

    A task is a straggler when its rate trails (1 - stac) of the mean rate AND
    its remaining time exceeds the mean by more than stt times the mean. The
    backup count stays strictly below bp times the currently executing tasks.
    """
    if estimates is None:
        estimates = estimate_tasks(StrategyKind.SAMR, view, history=history, params=params)
    if not estimates:
        return []
    apr = average_rate([e.rate for e in estimates])
    finite = [e.tte for e in estimates if e.tte != math.inf]
    atte = average_tte(finite) if finite else 0.0
    slow = [
        e
        for e in estimates
        if e.rate < (1.0 - params.stac) * apr and e.tte - atte > atte * params.stt
    ]
    task_num = len(view.snapshots)
    can_emit = lambda n: view.running_backups + n + 1 < params.bp * task_num  # noqa: E731
    cands = _ranked_candidates(slow, view.backed_up)
    return _assign_targets(view, cands, estimates, params, can_emit, dropped)


def esamr_detect(
    view: ClusterView,
    history: HistoryStore | None,
    params: StrategyParams = StrategyParams(),
    dropped: list[str] | None = None,
    cache: dict | None = None,
    estimates: list[TaskEstimate] | None = None,
) -> list[SpeculationDecision]:
    """Clustered historical weights refined by the running job, capped like LATE."""
    if estimates is None:
        estimates = estimate_tasks(
            StrategyKind.ESAMR, view, history=history, params=params, cache=cache
        )
    cap = concurrent_backup_cap(params, view.total_tasks)
    can_emit = lambda n: view.running_backups + n < cap  # noqa: E731
    cands = _ranked_candidates(estimates, view.backed_up)
    return _assign_targets(view, cands, estimates, params, can_emit, dropped)


def nn_detect(
    view: ClusterView,
    history: HistoryStore | None,
    estimator: NnEstimator | None,
    params: StrategyParams = StrategyParams(),
    dropped: list[str] | None = None,
    estimates: list[TaskEstimate] | None = None,
) -> list[SpeculationDecision]:
    """Network-estimated remaining times and weights, capped like LATE."""
    if estimates is None:
        estimates = estimate_tasks(
            StrategyKind.NN, view, history=history, estimator=estimator, params=params
        )
    cap = concurrent_backup_cap(params, view.total_tasks)
    can_emit = lambda n: view.running_backups + n < cap  # noqa: E731
    cands = _ranked_candidates(estimates, view.backed_up)
    return _assign_targets(view, cands, estimates, params, can_emit, dropped)


@dataclass
class StrategyOutcome:
    """One evaluation's full output: orders, drops, and the estimate log."""

    decisions: list[SpeculationDecision] = field(default_factory=list)
    dropped: list[str] = field(default_factory=list)
    estimates: list[TaskEstimate] = field(default_factory=list)
    cap_limit: float = 0.0


class Strategy:
    """Uniform evaluation wrapper the simulator calls once per tick."""

    def __init__(
        self,
        kind: StrategyKind,
        params: StrategyParams = StrategyParams(),
        estimator: NnEstimator | None = None,
    ):
        self.kind = kind
        self.params = params
        self.estimator = estimator
        self._kmeans_cache: dict = {}

    def evaluate(self, view: ClusterView, history: HistoryStore | None = None) -> StrategyOutcome:
        out = StrategyOutcome()
        kind, params = self.kind, self.params
        if kind is StrategyKind.NO_SPECULATE:
            return out
        if kind is StrategyKind.NAIVE:
            out.estimates = estimate_tasks(kind, view, params=params)
            out.cap_limit = math.inf
            ids = set(naive_detect(view.snapshots, params))
            cands = [e for e in out.estimates if e.task_id in ids]
            cands = [e for e in cands if e.task_id not in view.backed_up and e.progress < 1]
            cands.sort(key=lambda e: (e.progress, e.task_id))
            out.decisions = _assign_targets(
                view, cands, out.estimates, params, lambda n: True, out.dropped
            )
            return out
        if kind is StrategyKind.LATE:
            out.estimates = estimate_tasks(kind, view, params=params)
            out.cap_limit = float(concurrent_backup_cap(params, view.total_tasks))
            out.decisions = late_detect(view, params, out.dropped, out.estimates)
            return out
        if kind is StrategyKind.SAMR:
            out.estimates = estimate_tasks(kind, view, history=history, params=params)
            out.cap_limit = params.bp * len(view.snapshots)
            out.decisions = samr_detect(view, history, params, out.dropped, out.estimates)
            return out
        if kind is StrategyKind.ESAMR:
            out.estimates = estimate_tasks(
                kind, view, history=history, params=params, cache=self._kmeans_cache
            )
            out.cap_limit = float(concurrent_backup_cap(params, view.total_tasks))
            out.decisions = esamr_detect(
                view, history, params, out.dropped, self._kmeans_cache, out.estimates
            )
            return out
        if kind is StrategyKind.NN:
            out.estimates = estimate_tasks(
                kind, view, history=history, estimator=self.estimator, params=params
            )
            out.cap_limit = float(concurrent_backup_cap(params, view.total_tasks))
            out.decisions = nn_detect(
                view, history, self.estimator, params, out.dropped, out.estimates
            )
            return out
        raise ConfigurationError(f"unknown strategy kind: {kind}")


def make_strategy(
    kind: StrategyKind | str,
    params: StrategyParams = StrategyParams(),
    estimator: NnEstimator | None = None,
) -> Strategy:
    """Build a Strategy from a kind or its CLI name (none/naive/late/samr/esamr/nn)."""
    if isinstance(kind, str):
        try:
            kind = StrategyKind(kind)
        except ValueError as exc:
            names = ", ".join(k.value for k in StrategyKind)
            raise ConfigurationError(f"unknown strategy {kind!r}; choose one of {names}") from exc
    return Strategy(kind, params, estimator)
