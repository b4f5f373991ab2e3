"""Evaluation: confusion matrix, macro P/R/F1, top-1 accuracy, reporting.

Per class c: precision = cm[c][c] / column sum, recall = cm[c][c] / row
sum, F1 their harmonic mean; any zero denominator contributes 0. The
headline numbers are unweighted means over classes with support > 0
(macro); support-weighted averaging is available behind a flag.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from artemb.errors import ValidationError
from artemb.store import LabelSpace

METRIC_COLUMNS = ("P", "R", "F1", "acc@1")


@dataclass(frozen=True)
class PerClass:
    label: str
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class EvalReport:
    task: str
    confusion: np.ndarray
    precision: float
    recall: float
    f1: float
    acc1: float
    per_class: list[PerClass] = field(default_factory=list)
    average: str = "macro"


def confusion_matrix(preds: Sequence[int], golds: Sequence[int], n_classes: int) -> np.ndarray:
    """Entry (g, p) counts samples with gold class g predicted as p."""
    p = np.asarray(preds, dtype=np.int64)
    g = np.asarray(golds, dtype=np.int64)
    if p.shape != g.shape or p.ndim != 1:
        raise ValidationError(f"preds and golds must be equal-length 1-D, got {p.shape} vs {g.shape}")
    if p.size and (p.min() < 0 or p.max() >= n_classes or g.min() < 0 or g.max() >= n_classes):
        raise ValidationError(f"class index out of range for n_classes={n_classes}")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (g, p), 1)
    return cm


def _safe_div(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def macro_metrics(
    confusion: np.ndarray, average: str = "macro"
) -> tuple[float, float, float, list[PerClass]]:
    """(P, R, F1, per-class records) from a confusion matrix.

    average="macro" is the unweighted mean over classes with support > 0;
    average="weighted" weights those classes by support.
    """
    cm = np.asarray(confusion, dtype=np.int64)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise ValidationError(f"confusion matrix must be square, got {cm.shape}")
    if average not in ("macro", "weighted"):
        raise ValidationError(f"unknown average {average!r}")
    n = cm.shape[0]
    col_sums = cm.sum(axis=0)
    row_sums = cm.sum(axis=1)
    per_class = []
    for c in range(n):
        tp = float(cm[c, c])
        p = _safe_div(tp, float(col_sums[c]))
        r = _safe_div(tp, float(row_sums[c]))
        f1 = _safe_div(2.0 * p * r, p + r)
        per_class.append(PerClass(label=str(c), precision=p, recall=r, f1=f1, support=int(row_sums[c])))
    supported = [pc for pc in per_class if pc.support > 0]
    if not supported:
        return 0.0, 0.0, 0.0, per_class
    if average == "macro":
        weights = [1.0] * len(supported)
    else:
        weights = [float(pc.support) for pc in supported]
    total = sum(weights)
    p = sum(w * pc.precision for w, pc in zip(weights, supported)) / total
    r = sum(w * pc.recall for w, pc in zip(weights, supported)) / total
    f1 = sum(w * pc.f1 for w, pc in zip(weights, supported)) / total
    return p, r, f1, per_class


def accuracy_at_1(preds: Sequence[int], golds: Sequence[int]) -> float:
    p = np.asarray(preds)
    g = np.asarray(golds)
    if p.shape != g.shape or p.ndim != 1:
        raise ValidationError("preds and golds must be equal-length 1-D")
    if p.size == 0:
        raise ValidationError("cannot compute accuracy of an empty prediction list")
    return float(np.mean(p == g))


def build_report(
    preds: Sequence[int],
    golds: Sequence[int],
    labelspace: LabelSpace,
    average: str = "macro",
) -> EvalReport:
    cm = confusion_matrix(preds, golds, labelspace.n_classes)
    p, r, f1, per_class = macro_metrics(cm, average=average)
    named = [
        PerClass(labelspace.classes[i], pc.precision, pc.recall, pc.f1, pc.support)
        for i, pc in enumerate(per_class)
    ]
    return EvalReport(
        task=labelspace.task,
        confusion=cm,
        precision=p,
        recall=r,
        f1=f1,
        acc1=accuracy_at_1(preds, golds),
        per_class=named,
        average=average,
    )


# ---------------------------------------------------------------------------
# Rendering and serialization
# ---------------------------------------------------------------------------


def _pct(x: float) -> str:
    return f"{100.0 * x:.1f}"


def render_report(
    reports: Sequence[Sequence[EvalReport]], model_names: Sequence[str]
) -> str:
    """Text table: one row per model, P/R/F1/acc@1 columns per task.

    Values are percentages with one decimal. All models must cover the
    same task sequence.
    """
    if len(reports) != len(model_names):
        raise ValidationError("reports and model_names must have equal length")
    tasks: list[str] = [r.task for r in reports[0]] if reports else []
    for name, row in zip(model_names, reports):
        if [r.task for r in row] != tasks:
            raise ValidationError(f"model {name!r} does not cover tasks {tasks}")
    headers = ["model"] + [f"{task}.{col}" for task in tasks for col in METRIC_COLUMNS]
    lines = [[name] for name in model_names]
    for row, line in zip(reports, lines):
        for rep in row:
            line.extend([_pct(rep.precision), _pct(rep.recall), _pct(rep.f1), _pct(rep.acc1)])
    widths = [
        max(len(headers[i]), *(len(line[i]) for line in lines)) if lines else len(headers[i])
        for i in range(len(headers))
    ]
    def fmt(cells: list[str]) -> str:
        first = cells[0].ljust(widths[0])
        rest = [c.rjust(w) for c, w in zip(cells[1:], widths[1:])]
        return "  ".join([first] + rest).rstrip()
    out = [fmt(headers), fmt(["-" * w for w in widths])]
    out.extend(fmt(line) for line in lines)
    return "\n".join(out) + "\n"


def report_to_dict(report: EvalReport, model: str) -> dict:
    return {
        "model": model,
        "task": report.task,
        "P": report.precision,
        "R": report.recall,
        "F1": report.f1,
        "acc1": report.acc1,
        "average": report.average,
        "classes": [pc.label for pc in report.per_class],
        "per_class": [
            {
                "label": pc.label,
                "P": pc.precision,
                "R": pc.recall,
                "F1": pc.f1,
                "support": pc.support,
            }
            for pc in report.per_class
        ],
        "confusion": report.confusion.tolist(),
    }


def report_from_dict(doc: dict) -> tuple[EvalReport, str]:
    per_class = [
        PerClass(d["label"], d["P"], d["R"], d["F1"], d["support"]) for d in doc["per_class"]
    ]
    report = EvalReport(
        task=doc["task"],
        confusion=np.asarray(doc["confusion"], dtype=np.int64),
        precision=doc["P"],
        recall=doc["R"],
        f1=doc["F1"],
        acc1=doc["acc1"],
        per_class=per_class,
        average=doc.get("average", "macro"),
    )
    return report, doc.get("model", "")


def write_report_json(report: EvalReport, model: str, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(report_to_dict(report, model), indent=2, ensure_ascii=False) + "\n", "utf-8"
    )


def read_report_json(path: str | Path) -> tuple[EvalReport, str]:
    return report_from_dict(json.loads(Path(path).read_text("utf-8")))


def write_report_csv(
    reports: Sequence[Sequence[EvalReport]], model_names: Sequence[str], path: str | Path
) -> None:
    """Delimited companion to the text table: one row per (model, task)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "task", "P", "R", "F1", "acc1", "average"])
        for name, row in zip(model_names, reports):
            for rep in row:
                writer.writerow(
                    [
                        name,
                        rep.task,
                        f"{rep.precision:.6f}",
                        f"{rep.recall:.6f}",
                        f"{rep.f1:.6f}",
                        f"{rep.acc1:.6f}",
                        rep.average,
                    ]
                )
