"""Similarity primitives shared by the selector, trainer, and evaluator.

All similarities are cosine over float64. The dense-matrix path normalizes
each side once (one multiply-add per dimension afterwards) and is required
to agree with the scalar loop to within 1e-12.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, KOutOfRange, ZeroVector

SIM_BOUND_EPS = 1e-9


@dataclass(frozen=True)
class SimilarityMatrix:
    """Dense cosine similarities: values[i, j] = cos(rows[i], cols[j])."""

    rows: tuple[str, ...]
    cols: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.values.shape != (len(self.rows), len(self.cols)):
            raise DimensionMismatch(
                f"values shape {self.values.shape} does not match "
                f"({len(self.rows)}, {len(self.cols)})"
            )
        if self.values.size and not np.all(np.isfinite(self.values)):
            raise ZeroVector("similarity matrix contains non-finite entries")
        if self.values.size and (
            self.values.min() < -1.0 - SIM_BOUND_EPS
            or self.values.max() > 1.0 + SIM_BOUND_EPS
        ):
            raise DimensionMismatch("similarity entries outside [-1, 1] tolerance")


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity of two vectors.

    Raises DimensionMismatch on unequal lengths and ZeroVector when either
    norm vanishes.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise DimensionMismatch(f"cosine: shapes {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise ZeroVector("cosine: zero-norm operand")
    return float(np.dot(u, v) / (nu * nv))


def normalize_rows(mat: np.ndarray, ids: Sequence[str] | None = None) -> np.ndarray:
    """Return a copy of mat with unit-norm rows; names the offending id on failure."""
    mat = np.asarray(mat, dtype=np.float64)
    norms = np.linalg.norm(mat, axis=1)
    bad = np.flatnonzero(norms == 0.0)
    if bad.size:
        label = ids[bad[0]] if ids is not None else f"row {bad[0]}"
        raise ZeroVector(f"zero-norm vector: {label}")
    if mat.size and not np.all(np.isfinite(mat)):
        label = "matrix" if ids is None else "records"
        raise ZeroVector(f"non-finite values in {label}")
    return mat / norms[:, None]


def cosine_matrix(a: np.ndarray, b: np.ndarray,
                  a_ids: Sequence[str] | None = None,
                  b_ids: Sequence[str] | None = None) -> np.ndarray:
    """Pairwise cosine similarities between the rows of a and the rows of b."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatch(
            f"cosine_matrix: dim {a.shape[1]} vs {b.shape[1]}"
        )
    return normalize_rows(a, a_ids) @ normalize_rows(b, b_ids).T


def similarity_matrix(a: Sequence[tuple[str, np.ndarray]],
                      b: Sequence[tuple[str, np.ndarray]]) -> SimilarityMatrix:
    """Bulk cosine similarity with id bookkeeping.

    Row/column order follows input order; entry (i, j) equals
    cosine(a[i], b[j]) up to the dense-kernel rounding contract (1e-12).
    """
    a_ids = tuple(i for i, _ in a)
    b_ids = tuple(i for i, _ in b)
    if not a or not b:
        return SimilarityMatrix(a_ids, b_ids, np.zeros((len(a_ids), len(b_ids))))
    a_mat = np.stack([np.asarray(v, dtype=np.float64) for _, v in a])
    b_mat = np.stack([np.asarray(v, dtype=np.float64) for _, v in b])
    values = cosine_matrix(a_mat, b_mat, a_ids, b_ids)
    return SimilarityMatrix(a_ids, b_ids, values)


def kth_largest(values: Sequence[float] | np.ndarray, k: int) -> float:
    """k-th largest element counting duplicates; k=1 is the maximum."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        arr = arr.ravel()
    if not 1 <= k <= arr.size:
        raise KOutOfRange(f"k={k} outside [1, {arr.size}]")
    # partition puts the (n-k)-th order statistic in place: the k-th largest
    return float(np.partition(arr, arr.size - k)[arr.size - k])
