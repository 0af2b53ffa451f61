"""CLI entry points: ``capture`` (inference logging) and ``embed``."""
from __future__ import annotations

import argparse
import logging
import sys

from .embedder import embed_images_dir, embed_texts_file
from .runner import CaptureJob, capture_run


def capture_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="capture",
        description="Run a model over prompts and log per-token probabilities as JSONL.",
    )
    parser.add_argument("--model", required=True, help="model reference (hub id or local path)")
    parser.add_argument("--data", required=True, help="prompts JSONL (sample_id, prompt, ...)")
    parser.add_argument("--out", required=True)
    parser.add_argument("--model-id", default=None, help="model_id to record (defaults to ref name)")
    parser.add_argument("--dataset-id", default="capture")
    parser.add_argument("--task-kind", choices=["mcvq", "vqa"], default="vqa")
    parser.add_argument("--resamples", type=int, default=0)
    parser.add_argument("--temperature", type=float, default=0.7)
    parser.add_argument("--max-new-tokens", type=int, default=32)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--device", default="cpu")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        job = CaptureJob(
            model_ref=args.model, data_path=args.data, out_path=args.out,
            model_id=args.model_id, dataset_id=args.dataset_id, task_kind=args.task_kind,
            resamples=args.resamples, temperature=args.temperature,
            max_new_tokens=args.max_new_tokens, seed=args.seed, device=args.device,
        )
        count = capture_run(job)
    except Exception as exc:
        print(f"capture failed: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {count} records to {args.out}")
    return 0


def embed_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="embed",
        description="Extract text or image embeddings into an engine-format file pair.",
    )
    parser.add_argument("--encoder", required=True)
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--texts", help="JSONL of {id, text} lines")
    source.add_argument("--images", help="directory of image files")
    parser.add_argument("--out", required=True, help="output file-pair prefix")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        if args.texts:
            count = embed_texts_file(args.texts, args.encoder, args.out)
        else:
            count = embed_images_dir(args.images, args.encoder, args.out)
    except Exception as exc:
        print(f"embed failed: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {count} embeddings to {args.out}.json/.bin")
    return 0


if __name__ == "__main__":
    sys.exit(capture_main())
