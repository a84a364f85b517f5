"""Comparison selection strategies: uniform random and core-set (k-center
greedy) with mean-pooled or bag-of-words global features.

The bag-of-words variant quantizes local feature vectors against a k-means
codebook (default 300 centroids) and uses the assignment histogram as the
global descriptor. At desk scale items carry a single global vector, so the
mean-feature variant reduces to the identity on a singleton list; callers may
synthesize pseudo-local features (jitter copies) to exercise the full path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .corpus import UnpairedPool
from .errors import (DimensionMismatch, EmptyCovered, EmptyInput, SchemaError,
                     TooFewPoints)
from .hardneg import ScoreReport, SelectionResult

DEFAULT_BOW_CODEBOOK_SIZE = 300


@dataclass(frozen=True)
class Codebook:
    """K cluster centroids in local-feature space."""

    centroids: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.centroids, dtype=np.float64)
        object.__setattr__(self, "centroids", c)
        if c.ndim != 2 or c.shape[0] < 1:
            raise SchemaError("codebook needs at least one centroid")
        if not np.all(np.isfinite(c)):
            raise SchemaError("non-finite centroid entry")

    @property
    def size(self) -> int:
        return int(self.centroids.shape[0])


def random_select(pool: UnpairedPool, b: int, seed: int) -> SelectionResult:
    """Uniform sample without replacement, deterministic given the seed.

    Implemented by assigning each pool id a seeded uniform key and keeping the
    b largest, so the returned ScoreReport satisfies the selected-items-score-
    at-least-as-high invariant shared by every selector.
    """
    if b < 1:
        raise SchemaError("b must be >= 1")
    rng = np.random.default_rng(seed)
    keys = rng.uniform(size=len(pool))
    per_image = {pid: float(keys[i]) for i, pid in enumerate(pool.ids)}
    report = ScoreReport(per_image, 1.0 if len(pool) else 0.0)
    ranked = sorted(pool.ids, key=lambda pid: (-per_image[pid], pid))
    return SelectionResult(tuple(ranked[:min(b, len(ranked))]), report)


def mean_feature(local_features: Sequence[np.ndarray]) -> np.ndarray:
    """Element-wise mean of local feature vectors."""
    if len(local_features) == 0:
        raise EmptyInput("mean_feature needs at least one vector")
    mat = np.stack([np.asarray(v, dtype=np.float64) for v in local_features])
    return mat.mean(axis=0)


def kmeans_trace(vectors: Sequence[np.ndarray], k: int, max_iters: int = 50,
                 seed: int = 0) -> list[Codebook]:
    """Lloyd's algorithm from a seeded k-means++-style initialization,
    returning the codebook after initialization and after every update.

    Stops when assignments stabilize or at max_iters. A cluster that loses
    all its points keeps its previous centroid. Deterministic given the seed.
    """
    if k < 1 or max_iters < 1:
        raise SchemaError("k and max_iters must be >= 1")
    pts = np.stack([np.asarray(v, dtype=np.float64) for v in vectors]) \
        if len(vectors) else np.zeros((0, 0))
    if pts.shape[0] < k:
        raise TooFewPoints(f"{pts.shape[0]} points < k={k}")

    rng = np.random.default_rng(seed)
    n = pts.shape[0]
    centroids = np.empty((k, pts.shape[1]))
    centroids[0] = pts[rng.integers(n)]
    closest_sq = ((pts - centroids[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = closest_sq.sum()
        if total <= 0.0:
            # all remaining points coincide with a centroid; pick deterministically
            centroids[c] = pts[int(rng.integers(n))]
        else:
            centroids[c] = pts[int(rng.choice(n, p=closest_sq / total))]
        closest_sq = np.minimum(closest_sq, ((pts - centroids[c]) ** 2).sum(axis=1))

    trace = [Codebook(centroids.copy())]
    assign = np.full(n, -1)
    for _ in range(max_iters):
        d2 = ((pts[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_assign = np.argmin(d2, axis=1)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for c in range(k):
            members = pts[assign == c]
            if members.shape[0]:
                centroids[c] = members.mean(axis=0)
        trace.append(Codebook(centroids.copy()))
    return trace


def kmeans(vectors: Sequence[np.ndarray], k: int, max_iters: int = 50,
           seed: int = 0) -> Codebook:
    """Final codebook of kmeans_trace."""
    return kmeans_trace(vectors, k, max_iters, seed)[-1]


def kmeans_objective(vectors: Sequence[np.ndarray], codebook: Codebook) -> float:
    """Sum of squared distances from each point to its nearest centroid."""
    pts = np.stack([np.asarray(v, dtype=np.float64) for v in vectors])
    d2 = ((pts[:, None, :] - codebook.centroids[None, :, :]) ** 2).sum(axis=2)
    return float(d2.min(axis=1).sum())


def bow_feature(local_features: Sequence[np.ndarray], codebook: Codebook) -> np.ndarray:
    """Histogram of nearest-centroid assignments (Euclidean, ties to the
    lowest centroid index). An empty local set yields the zero vector."""
    hist = np.zeros(codebook.size, dtype=np.float64)
    if len(local_features) == 0:
        return hist
    pts = np.stack([np.asarray(v, dtype=np.float64) for v in local_features])
    if pts.shape[1] != codebook.centroids.shape[1]:
        raise DimensionMismatch(
            f"local dim {pts.shape[1]} != codebook dim {codebook.centroids.shape[1]}")
    d2 = ((pts[:, None, :] - codebook.centroids[None, :, :]) ** 2).sum(axis=2)
    for c in np.argmin(d2, axis=1):
        hist[c] += 1.0
    return hist


def kcenter_greedy(pool_features: Mapping[str, np.ndarray],
                   covered_features: Mapping[str, np.ndarray],
                   b: int) -> SelectionResult:
    """Repeatedly pick the pool point farthest (min Euclidean distance) from
    the covered set, then add it to the covered set; ties break by id.

    The reported score of a selected item is its min-distance at pick time;
    non-selected items keep their final min-distance, which the greedy order
    guarantees never exceeds any pick-time score.
    """
    if b < 1:
        raise SchemaError("b must be >= 1")
    if not covered_features:
        raise EmptyCovered("core-set selection needs a nonempty covered set")
    pool_ids = sorted(pool_features)
    if not pool_ids:
        return SelectionResult((), ScoreReport({}, 0.0))
    pool = np.stack([np.asarray(pool_features[i], dtype=np.float64) for i in pool_ids])
    covered = np.stack([np.asarray(covered_features[i], dtype=np.float64)
                        for i in sorted(covered_features)])
    if pool.shape[1] != covered.shape[1]:
        raise DimensionMismatch(
            f"pool dim {pool.shape[1]} != covered dim {covered.shape[1]}")

    min_dist = np.sqrt(((pool[:, None, :] - covered[None, :, :]) ** 2).sum(axis=2)).min(axis=1)
    selected: list[str] = []
    pick_scores: dict[str, float] = {}
    remaining = set(range(len(pool_ids)))
    for _ in range(min(b, len(pool_ids))):
        best = min(remaining, key=lambda i: (-min_dist[i], pool_ids[i]))
        selected.append(pool_ids[best])
        pick_scores[pool_ids[best]] = float(min_dist[best])
        remaining.discard(best)
        if not remaining:
            break
        dist_to_new = np.sqrt(((pool - pool[best]) ** 2).sum(axis=1))
        min_dist = np.minimum(min_dist, dist_to_new)

    per_image = dict(pick_scores)
    for i in remaining:
        per_image[pool_ids[i]] = float(min_dist[i])
    ratio = (sum(1 for v in per_image.values() if v > 0.0) / len(per_image)
             if per_image else 0.0)
    return SelectionResult(tuple(selected), ScoreReport(per_image, ratio))
