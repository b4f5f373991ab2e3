"""Embedding persistence, label spaces, filtering, and dataset splitting.

The on-disk container is the EMB1 format: a little-endian binary header,
a float32 row-major matrix, and a length-prefixed JSON-lines metadata
block (one line per row, plus an optional leading header line). The
format roundtrips bit-exactly; see FORMATS.md.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from artemb.errors import FormatError, ValidationError
from artemb.prng import stream

EMB1_MAGIC = b"EMB1"
EMB1_VERSION = 1

SPLIT_TAGS = ("train", "val", "test")


def _canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


@dataclass(frozen=True)
class RowMeta:
    """Per-row metadata: a unique non-empty id plus task->label strings."""

    id: str
    labels: Mapping[str, str]


class EmbeddingSet:
    """An immutable count x dim float32 matrix with aligned row metadata.

    Invariants enforced at construction: float32 storage, one metadata
    record per row, non-empty unique ids, and no all-zero rows (cosine
    would be undefined for them, so they are rejected at ingest).
    """

    def __init__(
        self,
        vectors: np.ndarray,
        meta: Sequence[RowMeta],
        header: dict | None = None,
    ) -> None:
        vectors = np.ascontiguousarray(vectors, dtype=np.float32)
        if vectors.ndim != 2:
            raise ValidationError(f"vectors must be 2-D, got shape {vectors.shape}")
        if vectors.shape[1] < 1:
            raise ValidationError("embedding dim must be positive")
        if len(meta) != vectors.shape[0]:
            raise ValidationError(
                f"metadata count {len(meta)} does not match row count {vectors.shape[0]}"
            )
        seen: set[str] = set()
        for i, m in enumerate(meta):
            if not m.id:
                raise ValidationError(f"row {i} has an empty id")
            if m.id in seen:
                raise ValidationError(f"duplicate id {m.id!r}")
            seen.add(m.id)
        if vectors.shape[0] and not np.all(np.any(vectors != 0.0, axis=1)):
            bad = int(np.flatnonzero(~np.any(vectors != 0.0, axis=1))[0])
            raise ValidationError(f"row {bad} ({meta[bad].id!r}) is the zero vector")
        self.vectors = vectors
        self.vectors.setflags(write=False)
        self.meta = list(meta)
        self.header = header

    @property
    def count(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def ids(self) -> list[str]:
        return [m.id for m in self.meta]

    @property
    def tasks(self) -> set[str]:
        """Union of task names present in any row's labels."""
        out: set[str] = set()
        for m in self.meta:
            out.update(m.labels.keys())
        return out

    def task_labels(self, task: str) -> list[str]:
        """Per-row labels for `task`; every row must carry the task."""
        if task not in self.tasks:
            raise ValidationError(f"unknown task {task!r}; present: {sorted(self.tasks)}")
        out = []
        for m in self.meta:
            if task not in m.labels:
                raise ValidationError(f"row {m.id!r} has no {task!r} label")
            out.append(m.labels[task])
        return out

    def subset(self, indices: Sequence[int]) -> "EmbeddingSet":
        idx = list(indices)
        return EmbeddingSet(self.vectors[idx], [self.meta[i] for i in idx], header=self.header)

    def validate(self) -> None:
        """Re-check all invariants (construction already enforces them)."""
        EmbeddingSet(self.vectors, self.meta, header=self.header)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingSet):
            return NotImplemented
        return (
            self.vectors.shape == other.vectors.shape
            and bool(np.all(self.vectors.view(np.uint32) == other.vectors.view(np.uint32)))
            and [(m.id, dict(m.labels)) for m in self.meta]
            == [(m.id, dict(m.labels)) for m in other.meta]
            and self.header == other.header
        )

    def __repr__(self) -> str:
        return f"EmbeddingSet(count={self.count}, dim={self.dim}, tasks={sorted(self.tasks)})"


@dataclass(frozen=True)
class LabelSpace:
    """Ordered class list for one task; the order is the canonical index order."""

    task: str
    classes: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.classes) < 2:
            raise ValidationError(f"label space {self.task!r} needs at least 2 classes")
        if len(set(self.classes)) != len(self.classes):
            raise ValidationError(f"label space {self.task!r} has duplicate classes")
        object.__setattr__(self, "classes", tuple(self.classes))

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def index_of(self, label: str) -> int:
        try:
            return self.classes.index(label)
        except ValueError:
            raise ValidationError(
                f"label {label!r} not in {self.task!r} label space"
            ) from None

    def sha256(self) -> str:
        import hashlib

        payload = _canonical_json({"task": self.task, "classes": list(self.classes)})
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# EMB1 reader / writer
# ---------------------------------------------------------------------------


def _meta_block(es: EmbeddingSet) -> bytes:
    lines = []
    if es.header is not None:
        lines.append(_canonical_json({"header": es.header}))
    for m in es.meta:
        lines.append(_canonical_json({"id": m.id, "labels": dict(m.labels)}))
    return "".join(line + "\n" for line in lines).encode("utf-8")


def write_store(es: EmbeddingSet, path: str | Path) -> None:
    """Serialize to EMB1 such that read_store reproduces the set bit-exactly."""
    es.validate()
    block = _meta_block(es)
    payload = np.ascontiguousarray(es.vectors, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(EMB1_MAGIC)
        fh.write(struct.pack("<III", EMB1_VERSION, es.count, es.dim))
        fh.write(payload)
        fh.write(struct.pack("<Q", len(block)))
        fh.write(block)


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise FormatError(f"truncated EMB1 file: expected {n} bytes of {what}, got {len(data)}")
    return data


def read_store(path: str | Path) -> EmbeddingSet:
    """Parse an EMB1 file, validating all EmbeddingSet invariants."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != EMB1_MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {EMB1_MAGIC!r}")
        version, count, dim = struct.unpack("<III", _read_exact(fh, 12, "header"))
        if version != EMB1_VERSION:
            raise FormatError(f"unsupported EMB1 version {version}")
        if dim < 1:
            raise FormatError("EMB1 header declares dim=0")
        payload = _read_exact(fh, 4 * count * dim, "float32 payload")
        (block_len,) = struct.unpack("<Q", _read_exact(fh, 8, "metadata length"))
        block = _read_exact(fh, block_len, "metadata block")
        trailing = fh.read(1)
        if trailing:
            raise FormatError("unexpected bytes after EMB1 metadata block")

    vectors = np.frombuffer(payload, dtype="<f4").reshape(count, dim)
    lines = block.decode("utf-8").splitlines()
    header: dict | None = None
    if lines and "header" in (first := _parse_json_line(lines[0], 0)) and "id" not in first:
        header = first["header"]
        lines = lines[1:]
    if len(lines) != count:
        raise FormatError(
            f"metadata block has {len(lines)} row lines but header declares count={count}"
        )
    meta = []
    for lineno, line in enumerate(lines):
        obj = _parse_json_line(line, lineno)
        if "id" not in obj or not isinstance(obj["id"], str):
            raise FormatError(f"metadata line {lineno} is missing a string 'id'")
        labels = obj.get("labels", {})
        if not isinstance(labels, dict) or not all(
            isinstance(k, str) and isinstance(v, str) for k, v in labels.items()
        ):
            raise FormatError(f"metadata line {lineno} has malformed 'labels'")
        meta.append(RowMeta(obj["id"], labels))
    try:
        return EmbeddingSet(vectors, meta, header=header)
    except ValidationError as exc:
        raise FormatError(f"EMB1 content violates invariants: {exc}") from exc


def _parse_json_line(line: str, lineno: int) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise FormatError(f"metadata line {lineno} is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise FormatError(f"metadata line {lineno} is not a JSON object")
    return obj


# ---------------------------------------------------------------------------
# Label space files
# ---------------------------------------------------------------------------


def write_labelspaces(spaces: Iterable[LabelSpace], path: str | Path) -> None:
    """Write the companion .labelspace JSON: {task: [ordered class names]}."""
    doc = {ls.task: list(ls.classes) for ls in spaces}
    Path(path).write_text(json.dumps(doc, indent=2, ensure_ascii=False) + "\n", "utf-8")


def read_labelspaces(path: str | Path) -> dict[str, LabelSpace]:
    try:
        doc = json.loads(Path(path).read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"label space file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise FormatError(f"label space file {path} must be a JSON object")
    out = {}
    for task, classes in doc.items():
        if not isinstance(classes, list) or not all(isinstance(c, str) for c in classes):
            raise FormatError(f"label space {task!r} must be a list of strings")
        out[task] = LabelSpace(task, tuple(classes))
    return out


def derive_labelspace(es: EmbeddingSet, task: str, order: str = "sorted") -> LabelSpace:
    """Build a LabelSpace from the labels present in a set.

    order="sorted" is the default so the class index order does not depend
    on row order; order="appearance" preserves first appearance.
    """
    labels = es.task_labels(task)
    if order == "sorted":
        classes = tuple(sorted(set(labels)))
    elif order == "appearance":
        classes = tuple(dict.fromkeys(labels))
    else:
        raise ValidationError(f"unknown label order {order!r}")
    return LabelSpace(task, classes)


# ---------------------------------------------------------------------------
# Filtering and splitting
# ---------------------------------------------------------------------------


def filter_labels(es: EmbeddingSet, task: str, excluded: Iterable[str]) -> EmbeddingSet:
    """Drop rows whose `task` label is in `excluded`, preserving row order.

    Rows lacking the task label are kept; filtering is per-task only.
    """
    if task not in es.tasks:
        raise ValidationError(f"unknown task {task!r}; present: {sorted(es.tasks)}")
    excluded = set(excluded)
    keep = [i for i, m in enumerate(es.meta) if m.labels.get(task) not in excluded]
    return es.subset(keep)


@dataclass
class SplitAssignment:
    """Deterministic train/val/test partition of an id set."""

    seed: int
    ratios: tuple[float, float, float]
    assignment: dict[str, str]
    task: str | None = None
    warnings: list[str] = field(default_factory=list)

    def ids(self, tag: str) -> list[str]:
        if tag not in SPLIT_TAGS:
            raise ValidationError(f"unknown split tag {tag!r}")
        return [i for i, t in self.assignment.items() if t == tag]

    def counts(self) -> dict[str, int]:
        out = {tag: 0 for tag in SPLIT_TAGS}
        for tag in self.assignment.values():
            out[tag] += 1
        return out


def _stratum_key(meta: RowMeta, task: str | None) -> str:
    if task is not None:
        return meta.labels[task]
    # Joint key across all tasks the row carries, so one shared split stays
    # stratified for every task at once.
    return "\x1f".join(f"{t}={meta.labels[t]}" for t in sorted(meta.labels))


def split_dataset(
    es: EmbeddingSet,
    ratios: tuple[float, float, float],
    seed: int,
    task: str | None = None,
) -> SplitAssignment:
    """Stratified train/val/test split with a seeded per-stratum shuffle.

    val and test sizes are floored per stratum; the remainder goes to
    train. A stratum with fewer rows than non-zero buckets is assigned
    entirely to train and reported in `warnings`. Stratification uses the
    given task's label, or the joint label across all tasks when task is
    None. Deterministic for fixed (seed, ratios, id order).
    """
    if len(ratios) != 3:
        raise ValidationError("ratios must be (train, val, test)")
    ratios = (float(ratios[0]), float(ratios[1]), float(ratios[2]))
    if any(r < 0 for r in ratios):
        raise ValidationError("ratios must be non-negative")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValidationError(f"ratios must sum to 1, got {sum(ratios)}")
    if es.count < 3:
        raise ValidationError(f"need at least 3 rows to split, got {es.count}")
    if task is not None and task not in es.tasks:
        raise ValidationError(f"unknown task {task!r}; present: {sorted(es.tasks)}")
    if task is not None:
        es.task_labels(task)  # raises if any row lacks the label

    strata: dict[str, list[str]] = {}
    for m in es.meta:
        strata.setdefault(_stratum_key(m, task), []).append(m.id)

    buckets = sum(1 for r in ratios if r > 0)
    tag_by_id: dict[str, str] = {}
    warnings: list[str] = []
    for key, ids in strata.items():
        n = len(ids)
        if n < buckets:
            for i in ids:
                tag_by_id[i] = "train"
            warnings.append(
                f"stratum {key!r} has {n} rows for {buckets} non-empty buckets; "
                "assigned entirely to train"
            )
            continue
        shuffled = list(ids)
        stream(seed, f"stratum:{key}").shuffle(shuffled)
        n_val = math.floor(n * ratios[1])
        n_test = math.floor(n * ratios[2])
        for i in shuffled[:n_val]:
            tag_by_id[i] = "val"
        for i in shuffled[n_val : n_val + n_test]:
            tag_by_id[i] = "test"
        for i in shuffled[n_val + n_test :]:
            tag_by_id[i] = "train"

    # Emit in row order so serialization is deterministic.
    assignment = {m.id: tag_by_id[m.id] for m in es.meta}
    return SplitAssignment(seed=seed, ratios=ratios, assignment=assignment, task=task, warnings=warnings)


def apply_split(es: EmbeddingSet, split: SplitAssignment, tag: str) -> EmbeddingSet:
    """Materialize one bucket of a split, preserving row order."""
    if tag not in SPLIT_TAGS:
        raise ValidationError(f"unknown split tag {tag!r}")
    missing = [m.id for m in es.meta if m.id not in split.assignment]
    if missing:
        raise ValidationError(f"split has no assignment for ids {missing[:3]}...")
    keep = [i for i, m in enumerate(es.meta) if split.assignment[m.id] == tag]
    return es.subset(keep)


def write_split(split: SplitAssignment, path: str | Path) -> None:
    doc = {
        "format": "split/1",
        "seed": split.seed,
        "ratios": list(split.ratios),
        "task": split.task,
        "counts": split.counts(),
        "warnings": split.warnings,
        "assignment": [{"id": i, "split": t} for i, t in split.assignment.items()],
    }
    Path(path).write_text(json.dumps(doc, indent=2, ensure_ascii=False) + "\n", "utf-8")


def read_split(path: str | Path) -> SplitAssignment:
    try:
        doc = json.loads(Path(path).read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"split file {path} is not valid JSON: {exc}") from exc
    if doc.get("format") != "split/1":
        raise FormatError(f"split file {path} has unknown format {doc.get('format')!r}")
    assignment = {}
    for row in doc["assignment"]:
        if row["split"] not in SPLIT_TAGS:
            raise FormatError(f"split file {path} has unknown tag {row['split']!r}")
        assignment[row["id"]] = row["split"]
    return SplitAssignment(
        seed=int(doc["seed"]),
        ratios=tuple(doc["ratios"]),
        assignment=assignment,
        task=doc.get("task"),
        warnings=list(doc.get("warnings", [])),
    )
