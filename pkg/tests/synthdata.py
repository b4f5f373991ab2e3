"""Synthetic data generators and independent oracles shared by the tests."""

import math

import numpy as np

from artemb.probe import LinearProbe, loss_and_grad
from artemb.store import EmbeddingSet, LabelSpace, RowMeta

BLOB_CLASSES = ("blob-0", "blob-1", "blob-2", "blob-3")


def balanced_centers(dim=64, sep=6.0):
    """Four class centers, pairwise distance exactly `sep`, whose pairwise
    differences have equal-magnitude coordinates.

    Built from the three balanced sign patterns over four classes, repeated
    dim//3 times (leftover coordinates carry no signal). Equal-magnitude
    signal per coordinate keeps Adam's per-coordinate normalization from
    distorting the learned direction.
    """
    patterns = [(1, 1, -1, -1), (1, -1, 1, -1), (1, -1, -1, 1)]
    reps = dim // 3
    cols = []
    for p in patterns:
        cols.extend([p] * reps)
    while len(cols) < dim:
        cols.append((0, 0, 0, 0))
    M = np.array(cols, dtype=np.float64).T  # (4, dim)
    # Any two classes differ in exactly 2*reps coordinates, by 2c each.
    c = sep / math.sqrt(8.0 * reps)
    return M * c


def blob_set(rng, centers, n_per_class, prefix, task="t", label_shift=0):
    """Isotropic unit-variance Gaussian blobs around the given centers.

    label_shift relabels cluster c as class (c + shift) mod n_classes,
    which builds validation sets that training actively hurts.
    """
    n_classes, dim = centers.shape
    rows, meta = [], []
    for c in range(n_classes):
        pts = rng.standard_normal((n_per_class, dim)) + centers[c]
        rows.append(pts)
        label = BLOB_CLASSES[(c + label_shift) % n_classes]
        meta.extend(
            RowMeta(f"{prefix}-{c}-{i}", {task: label}) for i in range(n_per_class)
        )
    es = EmbeddingSet(np.vstack(rows).astype(np.float32), meta)
    return es, LabelSpace(task, BLOB_CLASSES[:n_classes])


def labels_array(es, task, labelspace):
    return np.array([labelspace.index_of(m.labels[task]) for m in es.meta], dtype=np.int64)


def fd_gradients(probe, X, y, h=1e-4):
    """Central finite differences of the batch loss, entry by entry."""

    def loss_at(W, b):
        return loss_and_grad(LinearProbe(W, b, probe.labelspace), X, y)[0]

    dW = np.zeros_like(probe.W, dtype=np.float64)
    for i in range(probe.W.shape[0]):
        for j in range(probe.W.shape[1]):
            Wp = probe.W.copy()
            Wp[i, j] += h
            Wm = probe.W.copy()
            Wm[i, j] -= h
            dW[i, j] = (loss_at(Wp, probe.b) - loss_at(Wm, probe.b)) / (2.0 * h)
    db = np.zeros_like(probe.b, dtype=np.float64)
    for i in range(probe.b.shape[0]):
        bp = probe.b.copy()
        bp[i] += h
        bm = probe.b.copy()
        bm[i] -= h
        db[i] = (loss_at(probe.W, bp) - loss_at(probe.W, bm)) / (2.0 * h)
    return dW, db


def max_relative_error(analytic, numeric, floor=1e-12):
    return float(np.max(np.abs(analytic - numeric) / np.maximum(np.abs(numeric), floor)))


def cross_entropy_oracle(W, b, X, y):
    """Scalar-loop mean cross-entropy, no numpy, for grounding the loss."""
    total = 0.0
    for row, label in zip(X, y):
        z = [sum(float(wj) * float(xj) for wj, xj in zip(wrow, row)) + float(bi)
             for wrow, bi in zip(W, b)]
        zmax = max(z)
        logsum = zmax + math.log(sum(math.exp(v - zmax) for v in z))
        total += logsum - z[label]
    return total / len(y)


def random_probe(rng, n_classes, dim, labelspace, scale=0.5):
    return LinearProbe(
        scale * rng.standard_normal((n_classes, dim)),
        scale * rng.standard_normal(n_classes),
        labelspace,
    )
