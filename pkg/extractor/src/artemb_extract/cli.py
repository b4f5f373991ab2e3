"""Command-line entry: export image embeddings and prompt banks.

Two modes on one command, matching what a job needs:

    artemb-extract --model randproj:64 --images dir/ --manifest labels.jsonl \
        --batch 16 --out out/
    artemb-extract --model clip:openai/clip-vit-large-patch14 \
        --prompts-template "A painting in the <class> style." \
        --labelspace wikiart.labelspace.json --task style --out out/

Image mode writes embeddings.emb (+ derived .labelspace.json); prompt
mode writes <task>_bank.emb. Both write extraction_manifest.json.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from artemb_extract import __version__
from artemb_extract.emb1 import read_labelspace, write_labelspaces
from artemb_extract.encoders import EncoderError, load_encoder
from artemb_extract.extract import (
    ExtractionJob,
    derive_labelspaces,
    extract_image_embeddings,
    extract_prompt_embeddings,
    read_label_manifest,
    write_extraction_manifest,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="artemb-extract",
        description="Export frozen-encoder embeddings into EMB1 files.",
    )
    parser.add_argument("--version", action="version", version=f"artemb-extract {__version__}")
    parser.add_argument("--model", required=True, help="randproj:<dim> | clip:<ckpt> | hf:<ckpt>")
    parser.add_argument("--images", help="image directory (image mode)")
    parser.add_argument("--manifest", help="JSONL label manifest (image mode)")
    parser.add_argument("--batch", type=int, default=16, help="inference batch size")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--name", default="embeddings", help="image-mode output base name")
    parser.add_argument(
        "--feature",
        choices=("projected", "cls"),
        default="projected",
        help="clip image feature: shared-space projection or raw vision CLS",
    )
    parser.add_argument("--prompts-template", help="prompt template with one <...> placeholder")
    parser.add_argument("--labelspace", help=".labelspace JSON (prompt mode)")
    parser.add_argument("--task", help="task whose classes fill the template (prompt mode)")
    return parser


def run(args: argparse.Namespace) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    prompt_mode = args.prompts_template is not None
    if prompt_mode and (not args.labelspace or not args.task):
        raise ValueError("prompt extraction needs --labelspace and --task")
    if not prompt_mode and (not args.images or not args.manifest):
        raise ValueError("image extraction needs --images and --manifest")

    encoder = load_encoder(args.model, feature=args.feature)

    if prompt_mode:
        classes = read_labelspace(Path(args.labelspace), args.task)
        out_path = out_dir / f"{args.task}_bank.emb"
        manifest = extract_prompt_embeddings(
            encoder, args.task, classes, args.prompts_template, out_path, args.batch
        )
        print(f"wrote {manifest['count']} prompt embeddings (dim {manifest['dim']}) to {out_path}")
    else:
        job = ExtractionJob(
            model_id=args.model,
            images_dir=Path(args.images),
            manifest_path=Path(args.manifest),
            out_path=out_dir / f"{args.name}.emb",
            batch_size=args.batch,
            feature=args.feature,
        )
        manifest = extract_image_embeddings(job, encoder)
        spaces = derive_labelspaces(read_label_manifest(job.manifest_path))
        if spaces:
            write_labelspaces(out_dir / f"{args.name}.labelspace.json", spaces)
        print(
            f"wrote {manifest['count']} embeddings (dim {manifest['dim']}) to {job.out_path}"
            + (f"; skipped {len(manifest['skipped'])}" if manifest["skipped"] else "")
        )
    write_extraction_manifest(manifest, out_dir / "extraction_manifest.json")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except (EncoderError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
