"""Prompt-based zero-shot classification: argmax cosine over a prompt bank."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from artemb.errors import FormatError, ValidationError
from artemb.similarity import l2_normalize, normalize_rows
from artemb.store import EmbeddingSet, LabelSpace, RowMeta, read_store, write_store

PLACEHOLDER_RE = re.compile(r"<[^<>]+>")

# Default templates, one per task; any template with a single <...>
# placeholder works, so banks stay swappable per text encoder.
DEFAULT_TEMPLATES = {
    "style": "A painting in the <class> style.",
    "genre": "A <genre> painting.",
}


def build_prompts(labelspace: LabelSpace, template: str) -> list[str]:
    """One prompt per class, in class-index order.

    The template must contain exactly one <...> placeholder, which is
    replaced with each class name.
    """
    placeholders = PLACEHOLDER_RE.findall(template)
    if len(placeholders) != 1:
        raise ValidationError(
            f"template must contain exactly one <...> placeholder, found {len(placeholders)}"
        )
    return [template.replace(placeholders[0], cls) for cls in labelspace.classes]


@dataclass
class PromptBank:
    """Per-class prompt embeddings for one task, row k = class k."""

    task: str
    labelspace: LabelSpace
    template: str
    embeddings: np.ndarray
    prompts: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.embeddings = np.ascontiguousarray(self.embeddings, dtype=np.float32)
        if self.embeddings.ndim != 2:
            raise ValidationError("bank embeddings must be 2-D")
        if self.embeddings.shape[0] != self.labelspace.n_classes:
            raise ValidationError(
                f"bank has {self.embeddings.shape[0]} rows for "
                f"{self.labelspace.n_classes} classes"
            )
        if not np.all(np.any(self.embeddings != 0.0, axis=1)):
            raise ValidationError("bank contains a zero prompt embedding")
        expected = build_prompts(self.labelspace, self.template)
        if not self.prompts:
            self.prompts = expected
        elif self.prompts != expected:
            raise ValidationError("prompts do not match template applied to classes")

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]


def prompt_scores(f: np.ndarray, bank: PromptBank) -> np.ndarray:
    """Cosine similarity of one image embedding against every class prompt."""
    q = l2_normalize(np.asarray(f, dtype=np.float64))
    if q.shape[0] != bank.dim:
        raise ValidationError(f"dimension mismatch: query {q.shape[0]}, bank {bank.dim}")
    rows = normalize_rows(bank.embeddings).astype(np.float64)
    return rows @ q


def classify_zero_shot(f: np.ndarray, bank: PromptBank) -> int:
    """Predicted class index: argmax cosine, ties to the lowest index."""
    return int(np.argmax(prompt_scores(f, bank)))


def classify_many(queries: np.ndarray, bank: PromptBank) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized zero-shot over a query matrix.

    Returns (predicted class indices, winning scores); same argmax and
    tie rule as classify_zero_shot, row by row.
    """
    q = normalize_rows(np.asarray(queries)).astype(np.float64)
    if q.shape[1] != bank.dim:
        raise ValidationError(f"dimension mismatch: queries {q.shape[1]}, bank {bank.dim}")
    scores = q @ normalize_rows(bank.embeddings).astype(np.float64).T
    preds = np.argmax(scores, axis=1)
    return preds.astype(np.int64), scores[np.arange(len(preds)), preds]


def write_prompt_bank(bank: PromptBank, path: str | Path) -> None:
    """Persist a bank as EMB1 with task/template in the JSON header line."""
    header = {"kind": "prompt_bank", "task": bank.task, "template": bank.template}
    meta = [RowMeta(cls, {bank.task: cls}) for cls in bank.labelspace.classes]
    write_store(EmbeddingSet(bank.embeddings, meta, header=header), path)


def read_prompt_bank(path: str | Path) -> PromptBank:
    es = read_store(path)
    if not es.header or es.header.get("kind") != "prompt_bank":
        raise FormatError(f"{path} is not a prompt bank (missing header)")
    task = es.header.get("task")
    template = es.header.get("template")
    if not isinstance(task, str) or not isinstance(template, str):
        raise FormatError(f"{path} prompt bank header lacks task/template strings")
    classes = tuple(m.labels[task] for m in es.meta)
    labelspace = LabelSpace(task, classes)
    return PromptBank(task=task, labelspace=labelspace, template=template, embeddings=es.vectors)
