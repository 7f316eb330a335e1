"""Neural remaining-time and stage-weight estimators trained on execution history.

One small network is trained per (node, phase):

* map networks take (sub-progress, normalized processed pairs) and emit a single
  normalized remaining-time output; remaining time is recovered by multiplying
  with the node's largest observed map duration.
* reduce networks take (sub-progress, normalized processed pairs, normalized
  input bytes) and emit the first two stage-weight ratios; the third ratio is
  whatever is left after clamping and renormalizing.

Nodes without history in a phase simply have no network; callers fall back to
constant stage weights for them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from ..errors import ConfigurationError, DegenerateInputError
from ..history import HistoryStore
from ..taskmodel import (
    DEFAULT_BLOCK_SIZE,
    ExecutionRecord,
    Phase,
    StageWeights,
    pairs_for_input,
)
from .mlp import MlpModel, TrainConfig, load_mlp, mlp_forward, mlp_init, mlp_train, save_mlp

MAP_HIDDEN = 8
REDUCE_HIDDEN = 8
# Sub-progress grid points at which each record is replayed into training rows.
MAP_GRID = tuple(i / 10 for i in range(11))
REDUCE_GRID = (0.25, 0.5, 0.75, 1.0)


def _clamp01(x: float) -> float:
    return 0.0 if x < 0.0 else (1.0 if x > 1.0 else x)


@dataclass(frozen=True)
class PhaseNorms:
    """Scale factors that map raw features onto [0, 1] for one node and phase."""

    max_total_time: float
    max_input_bytes: int
    max_pairs: float


@dataclass(frozen=True, eq=False)
class NnEstimator:
    """Per-node networks plus the normalization constants they were trained with."""

    map_models: dict[str, MlpModel]
    reduce_models: dict[str, MlpModel]
    map_norms: dict[str, PhaseNorms]
    reduce_norms: dict[str, PhaseNorms]
    block_size: int = DEFAULT_BLOCK_SIZE

    def has_map_model(self, node_id: str) -> bool:
        return node_id in self.map_models

    def has_reduce_model(self, node_id: str) -> bool:
        return node_id in self.reduce_models


def _norms_for(records: list[ExecutionRecord], block_size: int) -> PhaseNorms:
    max_time = max(r.total_time for r in records)
    max_bytes = max(r.input_bytes for r in records)
    max_pairs = float(pairs_for_input(max_bytes, block_size))
    return PhaseNorms(max_total_time=max_time, max_input_bytes=max_bytes, max_pairs=max_pairs)


def _map_rows(records: list[ExecutionRecord], norms: PhaseNorms, block_size: int):
    rows = []
    for rec in records:
        pairs = pairs_for_input(rec.input_bytes, block_size)
        for g in MAP_GRID:
            feats = (g, _clamp01(g * pairs / norms.max_pairs))
            target = (_clamp01((1.0 - g) * rec.total_time / norms.max_total_time),)
            rows.append((feats, target))
    return rows

def _reduce_rows(records: list[ExecutionRecord], norms: PhaseNorms, block_size: int):
    rows = []
    for rec in records:
        pairs = pairs_for_input(rec.input_bytes, block_size)
        w1, w2, _ = rec.weights
        target = (w1, w2)
        for g in REDUCE_GRID:
            feats = (
                g,
                _clamp01(g * pairs / norms.max_pairs),
                _clamp01(rec.input_bytes / norms.max_input_bytes),
            )
            rows.append((feats, target))
    return rows


def train_estimator(
    history: HistoryStore,
    config: TrainConfig = TrainConfig(),
    block_size: int = DEFAULT_BLOCK_SIZE,
) -> NnEstimator:
    """Train one map and one reduce network per node that has history.

    Model seeds are derived from ``config.seed`` and the node's position in
    sorted id order, so retraining on an equal history store is deterministic.
    """
    if len(history) == 0:
        raise DegenerateInputError("cannot train an estimator from an empty history")
    map_models: dict[str, MlpModel] = {}
    reduce_models: dict[str, MlpModel] = {}
    map_norms: dict[str, PhaseNorms] = {}
    reduce_norms: dict[str, PhaseNorms] = {}
    for index, node_id in enumerate(history.node_ids()):
        maps = history.records_for_node(node_id, Phase.MAP)
        if maps:
            norms = _norms_for(maps, block_size)
            model = mlp_init((2, MAP_HIDDEN, 1), seed=config.seed + 2 * index)
            model, _ = mlp_train(model, _map_rows(maps, norms, block_size), config)
            map_models[node_id] = model
            map_norms[node_id] = norms
        reduces = history.records_for_node(node_id, Phase.REDUCE)
        if reduces:
            norms = _norms_for(reduces, block_size)
            model = mlp_init((3, REDUCE_HIDDEN, 2), seed=config.seed + 2 * index + 1)
            model, _ = mlp_train(model, _reduce_rows(reduces, norms, block_size), config)
            reduce_models[node_id] = model
            reduce_norms[node_id] = norms
    return NnEstimator(
        map_models=map_models,
        reduce_models=reduce_models,
        map_norms=map_norms,
        reduce_norms=reduce_norms,
        block_size=block_size,
    )


def predict_map_remaining(
    estimator: NnEstimator, node_id: str, sub_progress: float, processed_pairs: float
) -> float | None:
    """Remaining seconds for a map task, or None when the node has no model."""
    model = estimator.map_models.get(node_id)
    if model is None:
        return None
    norms = estimator.map_norms[node_id]
    feats = (_clamp01(sub_progress), _clamp01(processed_pairs / norms.max_pairs))
    out = mlp_forward(model, feats)
    return float(out[0]) * norms.max_total_time


def predict_reduce_weights(
    estimator: NnEstimator,
    node_id: str,
    input_bytes: int,
    sub_progress: float = 1.0,
    processed_pairs: float | None = None,
) -> StageWeights | None:
    """Predicted reduce stage weights, or None when the node has no model.

    The third ratio is 1 minus the two network outputs, clamped at zero, and the
    triple is renormalized so it always sums to one. The map-side ratios of the
    returned weights are the constant (1, 0) placeholder.
    """
    model = estimator.reduce_models.get(node_id)
    if model is None:
        return None
    norms = estimator.reduce_norms[node_id]
    if processed_pairs is None:
        processed_pairs = sub_progress * pairs_for_input(input_bytes, estimator.block_size)
    feats = (
        _clamp01(sub_progress),
        _clamp01(processed_pairs / norms.max_pairs),
        _clamp01(input_bytes / norms.max_input_bytes),
    )
    out = mlp_forward(model, feats)
    r1 = _clamp01(float(out[0]))
    r2 = _clamp01(float(out[1]))
    r3 = max(0.0, 1.0 - r1 - r2)
    total = r1 + r2 + r3
    if total <= 0.0:
        return StageWeights.naive()
    return StageWeights(1.0, 0.0, r1 / total, r2 / total, r3 / total)


_MANIFEST_NAME = "estimator.json"


def save_estimator(estimator: NnEstimator, directory: str | Path) -> Path:
    """Write networks and a manifest into ``directory``; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest: dict = {"block_size": estimator.block_size, "map": {}, "reduce": {}}
    for node_id, model in sorted(estimator.map_models.items()):
        fname = f"map_{node_id}.mlp"
        save_mlp(model, directory / fname)
        norms = estimator.map_norms[node_id]
        manifest["map"][node_id] = {
            "file": fname,
            "max_total_time": norms.max_total_time,
            "max_input_bytes": norms.max_input_bytes,
            "max_pairs": norms.max_pairs,
        }
    for node_id, model in sorted(estimator.reduce_models.items()):
        fname = f"reduce_{node_id}.mlp"
        save_mlp(model, directory / fname)
        norms = estimator.reduce_norms[node_id]
        manifest["reduce"][node_id] = {
            "file": fname,
            "max_total_time": norms.max_total_time,
            "max_input_bytes": norms.max_input_bytes,
            "max_pairs": norms.max_pairs,
        }
    path = directory / _MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_estimator(directory: str | Path) -> NnEstimator:
    directory = Path(directory)
    path = directory / _MANIFEST_NAME
    if not path.is_file():
        raise ConfigurationError(f"no estimator manifest at {path}")
    manifest = json.loads(path.read_text(encoding="utf-8"))
    map_models: dict[str, MlpModel] = {}
    reduce_models: dict[str, MlpModel] = {}
    map_norms: dict[str, PhaseNorms] = {}
    reduce_norms: dict[str, PhaseNorms] = {}
    for section, models, norms in (
        ("map", map_models, map_norms),
        ("reduce", reduce_models, reduce_norms),
    ):
        for node_id, entry in manifest.get(section, {}).items():
            models[node_id] = load_mlp(directory / entry["file"])
            norms[node_id] = PhaseNorms(
                max_total_time=float(entry["max_total_time"]),
                max_input_bytes=int(entry["max_input_bytes"]),
                max_pairs=float(entry["max_pairs"]),
            )
    return NnEstimator(
        map_models=map_models,
        reduce_models=reduce_models,
        map_norms=map_norms,
        reduce_norms=reduce_norms,
        block_size=int(manifest.get("block_size", DEFAULT_BLOCK_SIZE)),
    )
