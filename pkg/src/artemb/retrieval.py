"""Exact top-K image retrieval over an embedding index.

A flat, in-process index: rows are unit-normalized at build time and every
query is an exhaustive cosine scan, so results are exact and reproducible.
"""

from __future__ import annotations

import html
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from artemb.errors import ValidationError
from artemb.similarity import normalize_rows, top_k
from artemb.store import EmbeddingSet, RowMeta

SELF_HIT_SCORE = 1.0 - 1e-6


@dataclass(frozen=True)
class RetrievedItem:
    id: str
    labels: Mapping[str, str]
    score: float

    @property
    def style(self) -> str | None:
        return self.labels.get("style")

    @property
    def genre(self) -> str | None:
        return self.labels.get("genre")


@dataclass
class RetrievalIndex:
    """Unit-normalized matrix with row-aligned metadata."""

    matrix: np.ndarray
    meta: list[RowMeta]

    @property
    def count(self) -> int:
        return self.matrix.shape[0]


def build_index(es: EmbeddingSet) -> RetrievalIndex:
    if es.count == 0:
        raise ValidationError("cannot build a retrieval index from an empty set")
    return RetrievalIndex(matrix=normalize_rows(es.vectors), meta=list(es.meta))


def retrieve(
    index: RetrievalIndex,
    f: np.ndarray,
    k: int = 5,
    exclude_self: bool = False,
    query_id: str | None = None,
) -> list[RetrievedItem]:
    """Top-k neighbors with metadata, scores non-increasing.

    With exclude_self, a best hit that is a near-exact match (score >=
    1 - 1e-6) of the provided query_id is dropped and the list extended by
    one, so in-corpus queries do not return themselves.
    """
    if k <= 0:
        raise ValidationError(f"k must be positive, got {k}")
    fetch = k + 1 if exclude_self and query_id is not None else k
    hits = top_k(f, index.matrix, fetch)
    if (
        exclude_self
        and query_id is not None
        and hits
        and hits[0].score >= SELF_HIT_SCORE
        and index.meta[hits[0].row_index].id == query_id
    ):
        hits = hits[1:]
    hits = hits[:k]
    return [
        RetrievedItem(
            id=index.meta[h.row_index].id,
            labels=dict(index.meta[h.row_index].labels),
            score=h.score,
        )
        for h in hits
    ]


def render_contact_sheet(
    results: Sequence[tuple[str, Sequence[RetrievedItem]]],
    path: str | Path,
    title: str = "Retrieval results",
) -> None:
    """Write a static HTML contact sheet; ids that look like image paths
    are embedded as <img>, everything else renders as a text card."""
    rows = []
    for query_id, items in results:
        cells = [f"<td class='q'>{_cell(query_id, None)}</td>"]
        for item in items:
            caption = " / ".join(
                filter(None, [item.style, item.genre, f"{item.score:.4f}"])
            )
            cells.append(f"<td>{_cell(item.id, caption)}</td>")
        rows.append("<tr>" + "".join(cells) + "</tr>")
    doc = (
        "<!doctype html><html><head><meta charset='utf-8'>"
        f"<title>{html.escape(title)}</title>"
        "<style>body{font-family:sans-serif}table{border-collapse:collapse}"
        "td{border:1px solid #ccc;padding:6px;text-align:center;vertical-align:top}"
        "td.q{background:#f3f3f3}img{max-width:160px;max-height:160px;display:block;margin:auto}"
        ".cap{font-size:11px;color:#444;max-width:170px}</style></head><body>"
        f"<h1>{html.escape(title)}</h1><table>" + "".join(rows) + "</table></body></html>"
    )
    Path(path).write_text(doc, "utf-8")


_IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".gif", ".webp", ".bmp")


def _cell(item_id: str, caption: str | None) -> str:
    safe = html.escape(item_id)
    body = (
        f"<img src='{safe}' alt='{safe}'>"
        if item_id.lower().endswith(_IMAGE_SUFFIXES)
        else f"<div>{safe}</div>"
    )
    cap = f"<div class='cap'>{html.escape(caption)}</div>" if caption else ""
    return body + f"<div class='cap'>{safe}</div>" + cap
