"""Lloyd's k-means with deterministic seeding, used to cluster stage weights.

Determinism rules:
- initial centroids are sampled without replacement from the *distinct* points
  (so duplicated inputs cannot collapse two centroids onto each other),
- when fewer distinct points than k exist, the model is fitted with
  k' = min(k, distinct points),
- nearest-centroid ties break toward the lowest centroid index,
- a cluster left empty keeps its previous centroid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError


@dataclass(frozen=True, eq=False)
class KmeansModel:
    k: int
    centroids: np.ndarray  # shape (k, dim)
    seed: int
    max_iter: int
    n_iter: int
    inertia: float
    inertia_trace: tuple[float, ...]
    centroid_trace: tuple[np.ndarray, ...]  # centroids at the end of each iteration


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError("points must be a non-empty (n, dim) collection")
    return pts


def _assign(pts: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, float]:
    """Nearest-centroid labels (ties to the lowest index) and the summed squared distance."""
    d2 = ((pts[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    labels = d2.argmin(axis=1)
    inertia = float(d2[np.arange(len(pts)), labels].sum())
    return labels, inertia


def kmeans_fit(points, k: int = 10, seed: int = 0, max_iter: int = 100) -> KmeansModel:
    if k < 1:
        raise ValueError("k must be >= 1")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    pts = _as_points(points)
    distinct = np.unique(pts, axis=0)
    k_eff = min(k, len(distinct))
    rng = np.random.default_rng(seed)
    centroids = distinct[np.sort(rng.choice(len(distinct), size=k_eff, replace=False))].copy()

    labels = np.full(len(pts), -1)
    inertia_trace: list[float] = []
    centroid_trace: list[np.ndarray] = []
    n_iter = 0
    for _ in range(max_iter):
        new_labels, _ = _assign(pts, centroids)
        updated = centroids.copy()
        for c in range(k_eff):
            members = pts[new_labels == c]
            if len(members):
                updated[c] = members.mean(axis=0)
        centroids = updated
        n_iter += 1
        _, inertia = _assign(pts, centroids)
        inertia_trace.append(inertia)
        centroid_trace.append(centroids.copy())
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels

    return KmeansModel(
        k=k_eff,
        centroids=centroids,
        seed=seed,
        max_iter=max_iter,
        n_iter=n_iter,
        inertia=inertia_trace[-1],
        inertia_trace=tuple(inertia_trace),
        centroid_trace=tuple(centroid_trace),
    )


def kmeans_nearest(model: KmeansModel, point) -> int:
    """Index of the closest centroid; ties break toward the lowest index."""
    p = np.atleast_1d(np.asarray(point, dtype=float))
    if model.centroids.size == 0:
        raise ConfigurationError("model has no centroids")
    if p.shape[0] != model.centroids.shape[1]:
        raise ConfigurationError(f"point has dimension {p.shape[0]}, centroids {model.centroids.shape[1]}")
    d2 = ((model.centroids - p[None, :]) ** 2).sum(axis=1)
    return int(d2.argmin())
