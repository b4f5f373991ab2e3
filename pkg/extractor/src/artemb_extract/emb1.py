"""Standalone EMB1 and .labelspace writers.

Implements the wire format from the toolkit's FORMATS.md independently,
so emitted files are validated against the toolkit's reader rather than
produced by it. Little-endian throughout; one canonical JSON line per
row, optional header line first.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

EMB1_MAGIC = b"EMB1"
EMB1_VERSION = 1


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def write_emb1(
    path: str | Path,
    vectors: np.ndarray,
    ids: Sequence[str],
    labels: Sequence[Mapping[str, str]],
    header: dict | None = None,
) -> None:
    """Write one EMB1 file; enforces the format's row invariants."""
    matrix = np.ascontiguousarray(vectors, dtype="<f4")
    if matrix.ndim != 2 or matrix.shape[1] < 1:
        raise ValueError(f"vectors must be (count, dim>=1), got shape {matrix.shape}")
    count, dim = matrix.shape
    if len(ids) != count or len(labels) != count:
        raise ValueError("ids and labels must align with vector rows")
    seen = set()
    for i, row_id in enumerate(ids):
        if not row_id:
            raise ValueError(f"row {i} has an empty id")
        if row_id in seen:
            raise ValueError(f"duplicate id {row_id!r}")
        seen.add(row_id)
    if count and not np.all(np.any(matrix != 0.0, axis=1)):
        bad = int(np.flatnonzero(~np.any(matrix != 0.0, axis=1))[0])
        raise ValueError(f"row {bad} ({ids[bad]!r}) is the zero vector")

    lines = []
    if header is not None:
        lines.append(_canonical({"header": header}))
    for row_id, row_labels in zip(ids, labels):
        lines.append(_canonical({"id": row_id, "labels": dict(row_labels)}))
    block = "".join(line + "\n" for line in lines).encode("utf-8")

    with open(path, "wb") as fh:
        fh.write(EMB1_MAGIC)
        fh.write(struct.pack("<III", EMB1_VERSION, count, dim))
        fh.write(matrix.tobytes())
        fh.write(struct.pack("<Q", len(block)))
        fh.write(block)


def write_labelspaces(path: str | Path, spaces: Mapping[str, Sequence[str]]) -> None:
    """Write the companion .labelspace JSON ({task: [ordered classes]})."""
    doc = {task: list(classes) for task, classes in spaces.items()}
    Path(path).write_text(json.dumps(doc, indent=2, ensure_ascii=False) + "\n", "utf-8")


def read_labelspace(path: str | Path, task: str) -> list[str]:
    doc = json.loads(Path(path).read_text("utf-8"))
    if task not in doc:
        raise ValueError(f"task {task!r} not in {path} (has {sorted(doc)})")
    classes = doc[task]
    if not isinstance(classes, list) or len(classes) < 2:
        raise ValueError(f"task {task!r} needs an ordered list of >=2 classes")
    return classes
