"""Shared numeric kernels: L2 normalization, cosine, exact blocked top-K.

All dot products accumulate in float64 over the float32 stored data, which
bounds rounding error for dims up to a few thousand. The top-K scan is
exact (no approximate structures) and processes rows in blocks; blocking
partitions rows only, so the returned index sequence is independent of
block size (scores can differ in the last ulp across BLAS kernels).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from artemb.errors import ValidationError

DEFAULT_BLOCK_ROWS = 8192


@dataclass(frozen=True)
class ScoredHit:
    """One scan result: matrix row index and its cosine score."""

    row_index: int
    score: float


def _as_vector(v, name: str = "vector") -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be 1-D, got shape {arr.shape}")
    return arr


def l2_normalize(v: np.ndarray) -> np.ndarray:
    """Scale a vector to unit L2 norm, preserving float32 input dtype."""
    arr = np.asarray(v)
    v64 = _as_vector(arr)
    norm = float(np.linalg.norm(v64))
    if norm == 0.0:
        raise ValidationError("cannot normalize a zero vector")
    out = v64 / norm
    if arr.dtype == np.float32:
        return out.astype(np.float32)
    return out


def normalize_rows(matrix: np.ndarray) -> np.ndarray:
    """Unit-normalize every row of a matrix, returning float32 storage."""
    m = np.asarray(matrix)
    if m.ndim != 2:
        raise ValidationError(f"matrix must be 2-D, got shape {m.shape}")
    norms = np.linalg.norm(m.astype(np.float64), axis=1)
    if np.any(norms == 0.0):
        bad = int(np.flatnonzero(norms == 0.0)[0])
        raise ValidationError(f"matrix row {bad} is the zero vector")
    return (m.astype(np.float64) / norms[:, None]).astype(np.float32)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity <a,b> / (|a||b|), computed in float64."""
    va = _as_vector(a, "a")
    vb = _as_vector(b, "b")
    if va.shape != vb.shape:
        raise ValidationError(f"dimension mismatch: {va.shape[0]} vs {vb.shape[0]}")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise ValidationError("cosine is undefined for zero vectors")
    return float(np.dot(va, vb) / (na * nb))


def _cosine_scores(query: np.ndarray, matrix: np.ndarray, block_rows: int) -> np.ndarray:
    q = _as_vector(query, "query")
    qnorm = float(np.linalg.norm(q))
    if qnorm == 0.0:
        raise ValidationError("query is the zero vector")
    m = np.asarray(matrix)
    if m.ndim != 2:
        raise ValidationError(f"matrix must be 2-D, got shape {m.shape}")
    if m.shape[1] != q.shape[0]:
        raise ValidationError(f"dimension mismatch: query {q.shape[0]}, matrix {m.shape[1]}")
    n = m.shape[0]
    scores = np.empty(n, dtype=np.float64)
    for start in range(0, n, block_rows):
        block = m[start : start + block_rows].astype(np.float64)
        norms = np.linalg.norm(block, axis=1)
        if np.any(norms == 0.0):
            bad = start + int(np.flatnonzero(norms == 0.0)[0])
            raise ValidationError(f"matrix row {bad} is the zero vector")
        scores[start : start + block.shape[0]] = (block @ q) / (norms * qnorm)
    return scores


def top_k(
    query: np.ndarray,
    matrix: np.ndarray,
    k: int,
    block_rows: int = DEFAULT_BLOCK_ROWS,
) -> list[ScoredHit]:
    """Exact top-k rows of `matrix` by cosine similarity with `query`.

    Returns min(k, N) hits sorted by descending score, ties broken by
    ascending row index. Equals the exhaustive scan exactly for any
    block_rows value.
    """
    if k <= 0:
        raise ValidationError(f"k must be positive, got {k}")
    if block_rows <= 0:
        raise ValidationError(f"block_rows must be positive, got {block_rows}")
    scores = _cosine_scores(query, matrix, block_rows)
    n = scores.shape[0]
    if n == 0:
        raise ValidationError("cannot scan an empty matrix")
    if k >= n:
        candidates = np.arange(n)
    else:
        # Keep every row tied with the k-th largest score so index
        # tie-breaking stays exact at the selection boundary.
        kth = np.partition(scores, n - k)[n - k]
        candidates = np.flatnonzero(scores >= kth)
    order = candidates[np.lexsort((candidates, -scores[candidates]))][:k]
    return [ScoredHit(int(i), float(scores[i])) for i in order]
