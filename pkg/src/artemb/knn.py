"""Zero-shot k-NN classification over a labeled reference set.

The default k=1 assigns the label of the single most similar reference
embedding; k>1 runs a similarity-weighted vote over the top-k hits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from artemb.errors import ValidationError
from artemb.similarity import normalize_rows, top_k
from artemb.store import EmbeddingSet, LabelSpace


@dataclass
class ReferenceIndex:
    """Unit-normalized reference matrix plus per-row class indices."""

    matrix: np.ndarray
    labels: np.ndarray
    labelspace: LabelSpace

    def __post_init__(self) -> None:
        if self.matrix.ndim != 2:
            raise ValidationError("reference matrix must be 2-D")
        if self.labels.shape != (self.matrix.shape[0],):
            raise ValidationError("labels must align with matrix rows")
        if self.matrix.shape[0] and int(self.labels.max()) >= self.labelspace.n_classes:
            raise ValidationError("label index out of range for label space")

    @property
    def count(self) -> int:
        return self.matrix.shape[0]


def build_reference(es: EmbeddingSet, task: str, labelspace: LabelSpace) -> ReferenceIndex:
    """Normalize rows and resolve task labels against the class order."""
    labels = es.task_labels(task)
    indices = np.array([labelspace.index_of(lbl) for lbl in labels], dtype=np.int64)
    return ReferenceIndex(matrix=normalize_rows(es.vectors), labels=indices, labelspace=labelspace)


def _vote(hits, ref: ReferenceIndex, k: int) -> int:
    if k == 1:
        return int(ref.labels[hits[0].row_index])
    votes: dict[int, float] = {}
    for hit in hits:
        cls = int(ref.labels[hit.row_index])
        votes[cls] = votes.get(cls, 0.0) + hit.score
    return min(votes, key=lambda cls: (-votes[cls], cls))


def classify_knn(query: np.ndarray, ref: ReferenceIndex, k: int = 1) -> int:
    """Predicted class index for one query.

    k=1: label of the highest-cosine reference row. k>1: per-class sum of
    raw cosine scores over the top-k hits, ties to the lowest class index.
    """
    if k <= 0:
        raise ValidationError(f"k must be positive, got {k}")
    if ref.count == 0:
        raise ValidationError("reference index is empty")
    return _vote(top_k(query, ref.matrix, k), ref, k)


def classify_knn_many(queries: np.ndarray, ref: ReferenceIndex, k: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """classify_knn over a query matrix; returns (predictions, top scores)."""
    if k <= 0:
        raise ValidationError(f"k must be positive, got {k}")
    if ref.count == 0:
        raise ValidationError("reference index is empty")
    q = np.asarray(queries)
    if q.ndim != 2:
        raise ValidationError("queries must be 2-D")
    preds = np.empty(q.shape[0], dtype=np.int64)
    scores = np.empty(q.shape[0], dtype=np.float64)
    for i in range(q.shape[0]):
        hits = top_k(q[i], ref.matrix, k)
        scores[i] = hits[0].score
        preds[i] = _vote(hits, ref, k)
    return preds, scores
