"""Extraction jobs: images -> EMB1 stores, class lists -> prompt banks."""

from __future__ import annotations

import json
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from artemb_extract.emb1 import write_emb1, write_labelspaces

PLACEHOLDER_RE = re.compile(r"<[^<>]+>")


@dataclass
class ExtractionJob:
    """One image-extraction run: where the images and labels live, how to
    batch them, and where the outputs go."""

    model_id: str
    images_dir: Path
    manifest_path: Path
    out_path: Path
    batch_size: int = 16
    feature: str = "projected"
    skipped: list[dict] = field(default_factory=list)


def read_label_manifest(path: Path) -> list[tuple[str, dict[str, str]]]:
    """JSON lines of {"file": ..., "labels": {...}} or flat
    {"file": ..., "style": ..., "genre": ...}; row order is kept."""
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            obj = json.loads(line)
            if "file" not in obj:
                raise ValueError(f"{path}:{lineno} has no 'file' key")
            labels = obj.get("labels")
            if labels is None:
                labels = {k: v for k, v in obj.items() if k != "file" and isinstance(v, str)}
            entries.append((obj["file"], {str(k): str(v) for k, v in labels.items()}))
    return entries


def _batches(seq: Sequence, size: int):
    for start in range(0, len(seq), size):
        yield seq[start : start + size]


def extract_image_embeddings(job: ExtractionJob, encoder) -> dict:
    """Encode every decodable manifest image into job.out_path.

    Undecodable or missing files are skipped with a warning and recorded
    in the returned manifest dict. Row order matches manifest order; row
    ids are the manifest file names. Embeddings are stored raw (not
    normalized).
    """
    t0 = time.monotonic()
    entries = read_label_manifest(job.manifest_path)
    loaded: list[tuple[str, dict, Image.Image]] = []
    for name, labels in entries:
        path = job.images_dir / name
        try:
            with Image.open(path) as img:
                loaded.append((name, labels, img.convert("RGB")))
        except (FileNotFoundError, UnidentifiedImageError, OSError) as exc:
            reason = f"{type(exc).__name__}: {exc}"
            print(f"warning: skipping {name}: {reason}")
            job.skipped.append({"file": name, "reason": reason})

    chunks = []
    for batch in _batches(loaded, job.batch_size):
        chunks.append(encoder.encode_images([img for _, _, img in batch]))
    vectors = (
        np.vstack(chunks) if chunks else np.zeros((0, encoder.dim), dtype=np.float32)
    )
    if not loaded:
        print(f"warning: no decodable images listed in {job.manifest_path}")
    write_emb1(
        job.out_path,
        vectors,
        ids=[name for name, _, _ in loaded],
        labels=[labels for _, labels, _ in loaded],
    )

    manifest = {
        "kind": "extraction",
        "model": encoder.name,
        "feature": job.feature,
        "dim": int(vectors.shape[1]),
        "preprocessing": encoder.preprocessing,
        "images_dir": str(job.images_dir),
        "label_manifest": str(job.manifest_path),
        "count": int(vectors.shape[0]),
        "skipped": job.skipped,
        "output": str(job.out_path),
        "duration_s": round(time.monotonic() - t0, 6),
    }
    return manifest


def build_prompts(classes: Sequence[str], template: str) -> list[str]:
    placeholders = PLACEHOLDER_RE.findall(template)
    if len(placeholders) != 1:
        raise ValueError(
            f"template must contain exactly one <...> placeholder, found {len(placeholders)}"
        )
    return [template.replace(placeholders[0], cls) for cls in classes]


def extract_prompt_embeddings(
    encoder,
    task: str,
    classes: Sequence[str],
    template: str,
    out_path: Path,
    batch_size: int = 16,
) -> dict:
    """Encode one prompt per class into a prompt-bank EMB1 file."""
    t0 = time.monotonic()
    prompts = build_prompts(classes, template)
    chunks = [encoder.encode_texts(list(batch)) for batch in _batches(prompts, batch_size)]
    vectors = np.vstack(chunks)
    write_emb1(
        out_path,
        vectors,
        ids=list(classes),
        labels=[{task: cls} for cls in classes],
        header={"kind": "prompt_bank", "task": task, "template": template},
    )
    return {
        "kind": "prompt_extraction",
        "model": encoder.name,
        "task": task,
        "template": template,
        "classes": list(classes),
        "dim": int(vectors.shape[1]),
        "count": int(vectors.shape[0]),
        "output": str(out_path),
        "duration_s": round(time.monotonic() - t0, 6),
    }


def write_extraction_manifest(manifest: dict, path: Path) -> None:
    path.write_text(json.dumps(manifest, indent=2, ensure_ascii=False) + "\n", "utf-8")


def derive_labelspaces(entries: list[tuple[str, dict[str, str]]]) -> dict[str, list[str]]:
    """Sorted class lists per task, from manifest labels (>=2 classes only)."""
    by_task: dict[str, set[str]] = {}
    for _, labels in entries:
        for task, label in labels.items():
            by_task.setdefault(task, set()).add(label)
    return {task: sorted(vals) for task, vals in by_task.items() if len(vals) >= 2}
