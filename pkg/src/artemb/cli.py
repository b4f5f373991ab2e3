"""Command-line surface: ingest, split, filter, classify, train, retrieve, report.

Every run writes a manifest.json next to its outputs recording the
command, resolved parameters, SHA-256 digests of the input files, the
seed, and the toolkit version, so outputs are reproducible from the
manifest alone. Exit codes: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import re
import sys
import time
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from artemb import __version__
from artemb.errors import ArtembError, FormatError, ValidationError
from artemb.knn import build_reference, classify_knn_many
from artemb.metrics import (
    build_report,
    read_report_json,
    render_report,
    write_report_csv,
    write_report_json,
)
from artemb.probe import TrainConfig, predict_batch, read_probe, train_probe, write_probe
from artemb.retrieval import build_index, render_contact_sheet, retrieve
from artemb.store import (
    EmbeddingSet,
    LabelSpace,
    RowMeta,
    apply_split,
    derive_labelspace,
    filter_labels,
    read_labelspaces,
    read_store,
    split_dataset,
    write_labelspaces,
    write_split,
    write_store,
)
from artemb.zeroshot import classify_many, read_prompt_bank

SPLIT_FILE = "split.json"
MANIFEST_FILE = "manifest.json"


# ---------------------------------------------------------------------------
# Shared plumbing
# ---------------------------------------------------------------------------


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Run:
    """Collects inputs/outputs of one command and writes the manifest."""

    def __init__(self, args: argparse.Namespace) -> None:
        self.command = args.command
        self.args = args
        self.out_dir = Path(args.out)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.inputs: list[Path] = []
        self.outputs: list[Path] = []
        self.t0 = time.monotonic()

    def input(self, path: str | Path) -> Path:
        p = Path(path)
        if not p.is_file():
            raise ValidationError(f"input file not found: {p}")
        self.inputs.append(p)
        return p

    def output(self, name: str) -> Path:
        p = self.out_dir / name
        self.outputs.append(p)
        return p

    def finish(self) -> None:
        params = {
            k: v
            for k, v in sorted(vars(self.args).items())
            if k not in ("func", "command", "config") and not k.startswith("_")
        }
        manifest = {
            "command": self.command,
            "params": {k: (str(v) if isinstance(v, Path) else v) for k, v in params.items()},
            "inputs": {str(p): _sha256(p) for p in self.inputs},
            "outputs": [p.name for p in self.outputs],
            "seed": getattr(self.args, "seed", None),
            "version": __version__,
            "duration_s": round(time.monotonic() - self.t0, 6),
        }
        (self.out_dir / MANIFEST_FILE).write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", "utf-8"
        )


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", name).strip("_") or "unnamed"


def _parse_ratios(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise ValidationError(f"--ratios wants three comma-separated numbers, got {text!r}")
    try:
        return tuple(float(p) for p in parts)  # type: ignore[return-value]
    except ValueError as exc:
        raise ValidationError(f"bad --ratios value {text!r}: {exc}") from exc


def _resolve_labelspace(args, run: Run, fallback_set: EmbeddingSet | None) -> LabelSpace:
    if getattr(args, "labelspace", None):
        spaces = read_labelspaces(run.input(args.labelspace))
        if args.task not in spaces:
            raise ValidationError(
                f"task {args.task!r} not in label space file (has {sorted(spaces)})"
            )
        return spaces[args.task]
    if fallback_set is None:
        raise ValidationError("--labelspace is required here")
    return derive_labelspace(fallback_set, args.task, order="sorted")


# Predictions interchange: one optional header line, then one JSON object
# per classified row. gold is null when the row had no usable label.


def write_predictions(path: Path, task: str, model: str, classes, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        header = {"header": {"kind": "predictions", "task": task, "model": model, "classes": list(classes)}}
        fh.write(json.dumps(header, ensure_ascii=False) + "\n")
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def read_predictions(path: Path) -> tuple[dict, list[dict]]:
    header: dict = {}
    rows: list[dict] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno + 1} is not valid JSON: {exc}") from exc
            if lineno == 0 and "header" in obj and "id" not in obj:
                header = obj["header"]
            else:
                rows.append(obj)
    return header, rows


def _gold_indices(es: EmbeddingSet, task: str, labelspace: LabelSpace) -> list[int | None]:
    lookup = {cls: i for i, cls in enumerate(labelspace.classes)}
    return [lookup.get(m.labels.get(task)) for m in es.meta]


def _emit_classification(
    run: Run,
    query: EmbeddingSet,
    task: str,
    labelspace: LabelSpace,
    model: str,
    preds: np.ndarray,
    scores: np.ndarray,
    average: str = "macro",
) -> None:
    golds = _gold_indices(query, task, labelspace)
    rows = [
        {
            "id": m.id,
            "gold": golds[i],
            "pred": int(preds[i]),
            "score": round(float(scores[i]), 8),
        }
        for i, m in enumerate(query.meta)
    ]
    write_predictions(run.output("predictions.jsonl"), task, model, labelspace.classes, rows)
    scored = [(g, int(p)) for g, p in zip(golds, preds) if g is not None]
    if scored:
        report = build_report([p for _, p in scored], [g for g, _ in scored], labelspace, average)
        write_report_json(report, model, run.output("report.json"))
        table = render_report([[report]], [model])
        run.output("report.txt").write_text(table, "utf-8")
        print(table, end="")
        if len(scored) != query.count:
            print(f"note: {query.count - len(scored)} rows had no usable gold label", file=sys.stderr)
    else:
        print("note: no gold labels; wrote predictions only", file=sys.stderr)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_ingest(args) -> int:
    run = Run(args)
    meta: list[RowMeta] = []
    if args.jsonl:
        vectors = []
        with open(run.input(args.jsonl), "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh):
                if not line.strip():
                    continue
                obj = json.loads(line)
                vectors.append(np.asarray(obj["vector"], dtype=np.float32))
                meta.append(RowMeta(str(obj["id"]), dict(obj.get("labels", {}))))
        if not vectors:
            raise ValidationError(f"{args.jsonl} contains no rows")
        matrix = np.vstack(vectors)
    elif args.vectors:
        matrix = np.load(run.input(args.vectors))
        with open(run.input(args.meta), "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    obj = json.loads(line)
                    meta.append(RowMeta(str(obj["id"]), dict(obj.get("labels", {}))))
    else:
        raise ValidationError("ingest needs --jsonl or --vectors/--meta")
    es = EmbeddingSet(matrix, meta)
    write_store(es, run.output(f"{args.name}.emb"))

    spaces = []
    for task in sorted(es.tasks):
        labels = {m.labels[task] for m in es.meta if task in m.labels}
        if len(labels) >= 2:
            spaces.append(LabelSpace(task, tuple(sorted(labels))))
        else:
            print(f"note: task {task!r} has <2 classes; no label space emitted", file=sys.stderr)
    if spaces:
        write_labelspaces(spaces, run.output(f"{args.name}.labelspace.json"))
    print(f"ingested {es.count} rows, dim {es.dim}, tasks {sorted(es.tasks)}")
    run.finish()
    return 0


def cmd_split(args) -> int:
    run = Run(args)
    es = read_store(run.input(args.store))
    split = split_dataset(es, _parse_ratios(args.ratios), args.seed, task=args.task)
    for warning in split.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    write_split(split, run.output(SPLIT_FILE))
    counts = split.counts()
    if args.subsets:
        for tag in ("train", "val", "test"):
            write_store(apply_split(es, split, tag), run.output(f"{tag}.emb"))
    print(f"split {es.count} rows -> train {counts['train']}, val {counts['val']}, test {counts['test']}")
    run.finish()
    return 0


def cmd_filter(args) -> int:
    run = Run(args)
    es = read_store(run.input(args.store))
    filtered = filter_labels(es, args.task, set(args.exclude))
    write_store(filtered, run.output(f"{args.name}.emb"))
    print(f"kept {filtered.count} of {es.count} rows after excluding {sorted(set(args.exclude))}")
    run.finish()
    return 0


def cmd_zeroshot(args) -> int:
    run = Run(args)
    bank = read_prompt_bank(run.input(args.bank))
    query = read_store(run.input(args.query))
    if query.dim != bank.dim:
        raise ValidationError(f"query dim {query.dim} != bank dim {bank.dim}")
    preds, scores = classify_many(query.vectors, bank)
    model = args.model_name or "zero-shot"
    _emit_classification(run, query, bank.task, bank.labelspace, model, preds, scores, args.average)
    run.finish()
    return 0


def cmd_knn(args) -> int:
    run = Run(args)
    ref_set = read_store(run.input(args.ref))
    query = read_store(run.input(args.query))
    labelspace = _resolve_labelspace(args, run, fallback_set=ref_set)
    ref = build_reference(ref_set, args.task, labelspace)
    preds, scores = classify_knn_many(query.vectors, ref, k=args.k)
    model = args.model_name or f"knn-k{args.k}"
    _emit_classification(run, query, args.task, labelspace, model, preds, scores, args.average)
    run.finish()
    return 0


def cmd_probe_train(args) -> int:
    run = Run(args)
    train_set = read_store(run.input(args.train))
    val_set = read_store(run.input(args.val))
    labelspace = _resolve_labelspace(args, run, fallback_set=train_set)
    config = TrainConfig(
        learning_rate=args.lr,
        weight_decay=args.weight_decay,
        batch_size=args.batch_size,
        max_epochs=args.max_epochs,
        patience=args.patience,
        seed=args.seed,
    )
    probe, history = train_probe(train_set, val_set, args.task, labelspace, config)
    write_probe(probe, config, run.output("probe.prb"))
    doc = history.to_dict()
    run.output("history.json").write_text(json.dumps(doc, indent=2) + "\n", "utf-8")
    if args.figures:
        from artemb.figures import plot_training_history

        plot_training_history(doc, run.output("history.png"))
    last = history.epochs[-1]
    best = history.epochs[history.best_epoch - 1]
    print(
        f"trained {len(history.epochs)} epochs"
        f"{' (early stop)' if history.stopped_early else ''}; "
        f"best epoch {history.best_epoch}: val loss {best.val_loss:.6f}, "
        f"val acc {100 * best.val_acc:.1f}%; last epoch val acc {100 * last.val_acc:.1f}%"
    )
    run.finish()
    return 0


def cmd_probe_predict(args) -> int:
    run = Run(args)
    probe, _config = read_probe(run.input(args.probe))
    query = read_store(run.input(args.query))
    if query.dim != probe.dim:
        raise ValidationError(f"query dim {query.dim} != probe dim {probe.dim}")
    from artemb.probe import forward_batch

    Z = forward_batch(probe, query.vectors)
    preds = np.argmax(Z, axis=1).astype(np.int64)
    scores = Z[np.arange(Z.shape[0]), preds]
    model = args.model_name or "linear-probe"
    _emit_classification(
        run, query, probe.labelspace.task, probe.labelspace, model, preds, scores, args.average
    )
    run.finish()
    return 0


def cmd_retrieve(args) -> int:
    run = Run(args)
    index = build_index(read_store(run.input(args.index)))
    query = read_store(run.input(args.query))
    if query.dim != index.matrix.shape[1]:
        raise ValidationError(f"query dim {query.dim} != index dim {index.matrix.shape[1]}")
    sheets = []
    with open(run.output("retrieval.jsonl"), "w", encoding="utf-8") as fh:
        for i, m in enumerate(query.meta):
            hits = retrieve(
                index, query.vectors[i], k=args.k, exclude_self=args.exclude_self, query_id=m.id
            )
            for rank, hit in enumerate(hits, start=1):
                fh.write(
                    json.dumps(
                        {
                            "query_id": m.id,
                            "rank": rank,
                            "id": hit.id,
                            "style": hit.style,
                            "genre": hit.genre,
                            "score": round(hit.score, 8),
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )
            sheets.append((m.id, hits))
    if args.html:
        render_contact_sheet(sheets, run.output("contact_sheet.html"))
    print(f"retrieved top-{args.k} for {query.count} queries over {index.count} indexed rows")
    run.finish()
    return 0


def cmd_eval(args) -> int:
    run = Run(args)
    header, rows = read_predictions(run.input(args.pred))
    task = args.task or header.get("task")
    if not task:
        raise ValidationError("predictions carry no task; pass --task")
    if header.get("classes"):
        labelspace = LabelSpace(task, tuple(header["classes"]))
    else:
        labelspace = _resolve_labelspace(
            argparse.Namespace(labelspace=args.labelspace, task=task), run, None
        )
    pairs = [(r["gold"], r["pred"]) for r in rows if r.get("gold") is not None]
    if not pairs:
        raise ValidationError("no rows with gold labels to evaluate")
    report = build_report(
        [p for _, p in pairs], [g for g, _ in pairs], labelspace, average=args.average
    )
    model = args.model_name or header.get("model", "model")
    write_report_json(report, model, run.output("report.json"))
    table = render_report([[report]], [model])
    run.output("report.txt").write_text(table, "utf-8")
    print(table, end="")
    run.finish()
    return 0


def cmd_report(args) -> int:
    run = Run(args)
    by_model: dict[str, dict[str, object]] = {}
    task_order: list[str] = []
    for path in args.reports:
        report, model = read_report_json(run.input(path))
        by_model.setdefault(model, {})[report.task] = report
        if report.task not in task_order:
            task_order.append(report.task)
    model_names = list(by_model)
    nested = []
    for name in model_names:
        missing = [t for t in task_order if t not in by_model[name]]
        if missing:
            raise ValidationError(f"model {name!r} is missing tasks {missing}")
        nested.append([by_model[name][t] for t in task_order])

    table = render_report(nested, model_names)
    run.output("report.txt").write_text(table, "utf-8")
    write_report_csv(nested, model_names, run.output("report.csv"))
    print(table, end="")

    if args.figures:
        from artemb.figures import plot_confusion, plot_metric_bars

        fig_dir = run.out_dir / "figures"
        fig_dir.mkdir(exist_ok=True)
        for name, row in zip(model_names, nested):
            for report in row:
                out = fig_dir / f"confusion_{_slug(name)}_{_slug(report.task)}.png"
                plot_confusion(report, out, model=name)
                run.outputs.append(out)
        for metric in ("acc1", "f1"):
            out = fig_dir / f"summary_{metric}.png"
            plot_metric_bars(nested, model_names, out, metric=metric)
            run.outputs.append(out)
    run.finish()
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser(defaults: dict | None = None) -> argparse.ArgumentParser:
    """Construct the CLI. `defaults` (from --config) override the built-in
    flag defaults on every subcommand that knows the key; explicit flags
    still win because they are parsed after defaults are applied."""
    parser = argparse.ArgumentParser(
        prog="artemb",
        description="Embedding-space artwork classification and retrieval toolkit.",
    )
    parser.add_argument("--version", action="version", version=f"artemb {__version__}")
    parser.add_argument(
        "--config", default=None, help="TOML file whose keys mirror flag names; flags win"
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    subcommands: list[argparse.ArgumentParser] = []

    def add(name: str, func, help: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help)
        p.set_defaults(func=func)
        p.add_argument("--out", default=".", help="output directory (default: current)")
        subcommands.append(p)
        return p

    p = add("ingest", cmd_ingest, "convert raw vectors + labels into an EMB1 store")
    p.add_argument("--jsonl", help="rows of {id, vector, labels}")
    p.add_argument("--vectors", help=".npy matrix, paired with --meta")
    p.add_argument("--meta", help="JSON-lines of {id, labels}, aligned with --vectors")
    p.add_argument("--name", default="embeddings", help="output base name")

    p = add("split", cmd_split, "deterministic stratified train/val/test split")
    p.add_argument("store", help="input .emb file")
    p.add_argument("--ratios", default="0.8,0.1,0.1", help="train,val,test (default 0.8,0.1,0.1)")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--task", default=None, help="stratify on this task (default: joint labels)")
    p.add_argument(
        "--no-subsets",
        dest="subsets",
        action="store_false",
        help="write only split.json, not train/val/test.emb",
    )

    p = add("filter", cmd_filter, "drop rows carrying excluded labels for a task")
    p.add_argument("store", help="input .emb file")
    p.add_argument("--task", required=True)
    p.add_argument("--exclude", action="append", default=[], help="label to drop (repeatable)")
    p.add_argument("--name", default="filtered", help="output base name")

    p = add("zeroshot", cmd_zeroshot, "classify queries against a prompt bank")
    p.add_argument("--bank", required=True, help="prompt bank .emb file")
    p.add_argument("--query", required=True, help="query .emb file")
    p.add_argument("--model-name", default=None)
    p.add_argument("--average", choices=("macro", "weighted"), default="macro")

    p = add("knn", cmd_knn, "classify queries by their nearest labeled references")
    p.add_argument("--ref", required=True, help="labeled reference .emb file")
    p.add_argument("--query", required=True, help="query .emb file")
    p.add_argument("--task", required=True)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--labelspace", default=None, help="label space JSON (default: derive from ref)")
    p.add_argument("--model-name", default=None)
    p.add_argument("--average", choices=("macro", "weighted"), default="macro")

    p = add("probe-train", cmd_probe_train, "train a linear head on frozen embeddings")
    p.add_argument("--train", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--task", required=True)
    p.add_argument("--labelspace", default=None)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--weight-decay", type=float, default=1e-4)
    p.add_argument("--batch-size", type=int, default=1024)
    p.add_argument("--max-epochs", type=int, default=100)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--no-figures", dest="figures", action="store_false")

    p = add("probe-predict", cmd_probe_predict, "classify queries with a trained probe")
    p.add_argument("--probe", required=True, help="probe .prb checkpoint")
    p.add_argument("--query", required=True)
    p.add_argument("--model-name", default=None)
    p.add_argument("--average", choices=("macro", "weighted"), default="macro")

    p = add("retrieve", cmd_retrieve, "exact top-K cosine retrieval with metadata")
    p.add_argument("--index", required=True, help="corpus .emb file")
    p.add_argument("--query", required=True, help="query .emb file")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--exclude-self", action="store_true")
    p.add_argument("--html", action="store_true", help="also write a contact sheet")

    p = add("eval", cmd_eval, "score a predictions file")
    p.add_argument("--pred", required=True, help="predictions.jsonl")
    p.add_argument("--task", default=None)
    p.add_argument("--labelspace", default=None)
    p.add_argument("--model-name", default=None)
    p.add_argument("--average", choices=("macro", "weighted"), default="macro")

    p = add("report", cmd_report, "combine report.json files into a table + figures")
    p.add_argument("reports", nargs="+", help="report.json files")
    p.add_argument("--no-figures", dest="figures", action="store_false")

    if defaults:
        unknown = set(defaults)
        for p in subcommands:
            known = {a.dest for a in p._actions}
            applicable = {k: v for k, v in defaults.items() if k in known}
            p.set_defaults(**applicable)
            unknown -= set(applicable)
        if unknown:
            raise ValidationError(f"config keys match no flag: {sorted(unknown)}")
    return parser


def _load_config(argv: list[str]) -> dict:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    ns, _ = pre.parse_known_args(argv)
    if not ns.config:
        return {}
    path = Path(ns.config)
    if not path.is_file():
        raise ValidationError(f"config file not found: {path}")
    with open(path, "rb") as fh:
        try:
            doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise FormatError(f"config file {path} is not valid TOML: {exc}") from exc
    flat = {}
    for key, value in doc.items():
        if isinstance(value, dict):
            raise FormatError(f"config file {path} must be flat key = value pairs")
        flat[key.replace("-", "_")] = value
    return flat


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        parser = build_parser(_load_config(argv))
        args = parser.parse_args(argv)
        return args.func(args)
    except (ArtembError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
