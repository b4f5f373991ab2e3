"""Trainable linear head over frozen embeddings.

Softmax regression trained with cross-entropy, Adam with bias correction,
decoupled weight decay on the weight matrix only, seeded minibatch
shuffles, and early stopping on validation loss with best-checkpoint
restoration. All math runs in float64 for a deterministic, finite-
difference-checkable trajectory; checkpoints store float32 (PRB1 format).
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Sequence

import numpy as np

from artemb.errors import FormatError, TrainingDivergedError, ValidationError
from artemb.prng import stream
from artemb.store import EmbeddingSet, LabelSpace

PRB1_MAGIC = b"PRB1"


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    weight_decay: float = 1e-4
    batch_size: int = 1024
    max_epochs: int = 100
    patience: int = 5
    seed: int = 42
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self) -> None:
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ValidationError("learning_rate and weight_decay must be non-negative")
        if self.batch_size <= 0 or self.max_epochs <= 0 or self.patience <= 0:
            raise ValidationError("batch_size, max_epochs, patience must be positive")
        if self.patience > self.max_epochs:
            raise ValidationError("patience must not exceed max_epochs")
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValidationError("betas must lie in (0, 1)")
        if self.eps <= 0:
            raise ValidationError("eps must be positive")


@dataclass
class LinearProbe:
    """Affine head: logits z = W @ f + b."""

    W: np.ndarray
    b: np.ndarray
    labelspace: LabelSpace

    def __post_init__(self) -> None:
        self.W = np.asarray(self.W)
        self.b = np.asarray(self.b)
        if self.W.ndim != 2 or self.b.ndim != 1:
            raise ValidationError("W must be 2-D and b 1-D")
        if self.W.shape[0] != self.b.shape[0]:
            raise ValidationError("W rows and b length must match")
        if self.W.shape[0] != self.labelspace.n_classes:
            raise ValidationError("W rows must match the number of classes")
        if not (np.all(np.isfinite(self.W)) and np.all(np.isfinite(self.b))):
            raise ValidationError("probe parameters must be finite")

    @property
    def n_classes(self) -> int:
        return self.W.shape[0]

    @property
    def dim(self) -> int:
        return self.W.shape[1]

    @classmethod
    def zeros(cls, dim: int, labelspace: LabelSpace) -> "LinearProbe":
        n = labelspace.n_classes
        return cls(np.zeros((n, dim)), np.zeros(n), labelspace)

    def copy(self) -> "LinearProbe":
        return LinearProbe(self.W.copy(), self.b.copy(), self.labelspace)


@dataclass
class AdamState:
    """First/second moment accumulators and the shared step counter."""

    m_W: np.ndarray
    v_W: np.ndarray
    m_b: np.ndarray
    v_b: np.ndarray
    t: int = 0

    @classmethod
    def zeros_like(cls, probe: LinearProbe) -> "AdamState":
        return cls(
            m_W=np.zeros_like(probe.W, dtype=np.float64),
            v_W=np.zeros_like(probe.W, dtype=np.float64),
            m_b=np.zeros_like(probe.b, dtype=np.float64),
            v_b=np.zeros_like(probe.b, dtype=np.float64),
        )


def forward(probe: LinearProbe, f: np.ndarray) -> np.ndarray:
    """Logits for one embedding: z = W @ f + b, accumulated in float64."""
    v = np.asarray(f, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != probe.dim:
        raise ValidationError(f"expected a {probe.dim}-vector, got shape {v.shape}")
    return probe.W.astype(np.float64) @ v + probe.b.astype(np.float64)


def forward_batch(probe: LinearProbe, X: np.ndarray) -> np.ndarray:
    X64 = np.asarray(X, dtype=np.float64)
    if X64.ndim != 2 or X64.shape[1] != probe.dim:
        raise ValidationError(f"expected (B, {probe.dim}) features, got {X64.shape}")
    return X64 @ probe.W.astype(np.float64).T + probe.b.astype(np.float64)


def _log_softmax(Z: np.ndarray) -> np.ndarray:
    # Max-subtraction keeps exp() in range for logits up to ~1e308.
    shifted = Z - Z.max(axis=1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))


def softmax(Z: np.ndarray) -> np.ndarray:
    return np.exp(_log_softmax(Z))


def loss_and_grad(
    probe: LinearProbe, X: np.ndarray, y: Sequence[int]
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy over a batch plus exact analytic gradients."""
    y_arr = np.asarray(y, dtype=np.int64)
    if y_arr.size == 0:
        raise ValidationError("batch must be non-empty")
    if y_arr.min() < 0 or y_arr.max() >= probe.n_classes:
        raise ValidationError("label index out of range")
    Z = forward_batch(probe, X)
    if Z.shape[0] != y_arr.shape[0]:
        raise ValidationError("features and labels must have equal length")
    logp = _log_softmax(Z)
    batch = y_arr.shape[0]
    loss = float(-np.mean(logp[np.arange(batch), y_arr]))
    dZ = np.exp(logp)
    dZ[np.arange(batch), y_arr] -= 1.0
    dZ /= batch
    dW = dZ.T @ np.asarray(X, dtype=np.float64)
    db = dZ.sum(axis=0)
    return loss, dW, db


def adam_step(
    probe: LinearProbe,
    dW: np.ndarray,
    db: np.ndarray,
    state: AdamState,
    config: TrainConfig,
) -> None:
    """One bias-corrected Adam update, then decoupled decay on W (not b)."""
    if not (np.all(np.isfinite(dW)) and np.all(np.isfinite(db))):
        raise TrainingDivergedError("non-finite gradients")
    state.t += 1
    lr, b1, b2 = config.learning_rate, config.beta1, config.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for param, grad, m, v in (
        (probe.W, dW, state.m_W, state.v_W),
        (probe.b, db, state.m_b, state.v_b),
    ):
        m *= b1
        m += (1.0 - b1) * grad
        v *= b2
        v += (1.0 - b2) * np.square(grad)
        param -= lr * (m / c1) / (np.sqrt(v / c2) + config.eps)
    probe.W -= lr * config.weight_decay * probe.W


def predict(probe: LinearProbe, f: np.ndarray) -> int:
    """argmax over logits; ties go to the lowest class index."""
    return int(np.argmax(forward(probe, f)))


def predict_batch(probe: LinearProbe, X: np.ndarray) -> np.ndarray:
    return np.argmax(forward_batch(probe, X), axis=1).astype(np.int64)


def evaluate(probe: LinearProbe, X: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """(mean cross-entropy, top-1 accuracy) over a labeled matrix."""
    Z = forward_batch(probe, X)
    logp = _log_softmax(Z)
    n = y.shape[0]
    loss = float(-np.mean(logp[np.arange(n), y]))
    acc = float(np.mean(np.argmax(Z, axis=1) == y))
    return loss, acc


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    train_acc: float
    val_acc: float


@dataclass
class TrainHistory:
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    def to_dict(self) -> dict:
        return {
            "best_epoch": self.best_epoch,
            "stopped_early": self.stopped_early,
            "epochs": [asdict(e) for e in self.epochs],
        }


def _resolve(es: EmbeddingSet, task: str, labelspace: LabelSpace) -> tuple[np.ndarray, np.ndarray]:
    labels = es.task_labels(task)
    y = np.array([labelspace.index_of(lbl) for lbl in labels], dtype=np.int64)
    return es.vectors, y


def train_probe(
    train_set: EmbeddingSet,
    val_set: EmbeddingSet,
    task: str,
    labelspace: LabelSpace,
    config: TrainConfig | None = None,
) -> tuple[LinearProbe, TrainHistory]:
    """Train from zero-initialized W, b; return the best-val-loss checkpoint.

    Each epoch visits a seeded permutation of the train rows in batches of
    config.batch_size (last batch may be smaller). Training stops at
    max_epochs or once validation loss has not improved for `patience`
    consecutive epochs.
    """
    config = config or TrainConfig()
    if train_set.count == 0 or val_set.count == 0:
        raise ValidationError("train and val splits must be non-empty")
    if train_set.dim != val_set.dim:
        raise ValidationError("train and val dims must match")
    X_tr, y_tr = _resolve(train_set, task, labelspace)
    X_va, y_va = _resolve(val_set, task, labelspace)

    probe = LinearProbe.zeros(train_set.dim, labelspace)  # float64 zeros
    state = AdamState.zeros_like(probe)
    history = TrainHistory()
    best_loss = np.inf
    best_probe = probe.copy()
    bad_epochs = 0

    n = train_set.count
    for epoch in range(1, config.max_epochs + 1):
        order = stream(config.seed, f"epoch:{epoch}").permutation(n)
        running, seen = 0.0, 0
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            loss, dW, db = loss_and_grad(probe, X_tr[batch], y_tr[batch])
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite training loss at epoch {epoch}, batch offset {start}"
                )
            adam_step(probe, dW, db, state, config)
            running += loss * len(batch)
            seen += len(batch)
        train_loss_run = running / seen
        _, train_acc = evaluate(probe, X_tr, y_tr)
        val_loss, val_acc = evaluate(probe, X_va, y_va)
        if not np.isfinite(val_loss):
            raise TrainingDivergedError(f"non-finite validation loss at epoch {epoch}")
        history.epochs.append(
            EpochStats(epoch, train_loss_run, val_loss, train_acc, val_acc)
        )
        if val_loss < best_loss:
            best_loss = val_loss
            best_probe = probe.copy()
            history.best_epoch = epoch
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= config.patience:
                history.stopped_early = True
                break
    return best_probe, history


# ---------------------------------------------------------------------------
# PRB1 checkpoint format
# ---------------------------------------------------------------------------


def write_probe(
    probe: LinearProbe, config: TrainConfig, path: str | Path
) -> None:
    """PRB1: magic, u32 N, u32 D, float32 W row-major, float32 b, JSON footer."""
    footer = {
        "config": asdict(config),
        "labelspace": {"task": probe.labelspace.task, "classes": list(probe.labelspace.classes)},
        "labelspace_sha256": probe.labelspace.sha256(),
    }
    blob = json.dumps(footer, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(PRB1_MAGIC)
        fh.write(struct.pack("<II", probe.n_classes, probe.dim))
        fh.write(np.ascontiguousarray(probe.W, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(probe.b, dtype="<f4").tobytes())
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)


def read_probe(path: str | Path) -> tuple[LinearProbe, TrainConfig]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != PRB1_MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {PRB1_MAGIC!r}")
        raw = fh.read(8)
        if len(raw) != 8:
            raise FormatError("truncated PRB1 header")
        n_classes, dim = struct.unpack("<II", raw)
        w_bytes = fh.read(4 * n_classes * dim)
        b_bytes = fh.read(4 * n_classes)
        if len(w_bytes) != 4 * n_classes * dim or len(b_bytes) != 4 * n_classes:
            raise FormatError("truncated PRB1 parameters")
        raw = fh.read(8)
        if len(raw) != 8:
            raise FormatError("truncated PRB1 footer length")
        (footer_len,) = struct.unpack("<Q", raw)
        blob = fh.read(footer_len)
        if len(blob) != footer_len:
            raise FormatError("truncated PRB1 footer")
    try:
        footer = json.loads(blob.decode("utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"PRB1 footer is not valid JSON: {exc}") from exc
    ls = footer.get("labelspace", {})
    labelspace = LabelSpace(ls["task"], tuple(ls["classes"]))
    if footer.get("labelspace_sha256") not in (None, labelspace.sha256()):
        raise FormatError("PRB1 labelspace hash does not match its contents")
    W = np.frombuffer(w_bytes, dtype="<f4").reshape(n_classes, dim).copy()
    b = np.frombuffer(b_bytes, dtype="<f4").copy()
    config = TrainConfig(**footer["config"])
    return LinearProbe(W, b, labelspace), config
