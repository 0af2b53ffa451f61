"""Record and file emission in the scoring engine's external formats.

This module deliberately does not import the engine; it writes the
documented interchange formats directly (the engine's parsers are the
conformance oracle, exercised in tests).
"""
from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np


def record_obj(
    model_id: str,
    dataset_id: str,
    sample_id: str,
    task_kind: str,
    output_text: str,
    vocab_size: int,
    tokens: Sequence[Mapping],
    prompt: str | None = None,
    gold_answer: str | None = None,
    resamples: Sequence[Mapping] | None = None,
) -> dict:
    obj = {
        "model_id": model_id,
        "dataset_id": dataset_id,
        "sample_id": sample_id,
        "task_kind": task_kind,
        "output_text": output_text,
        "vocab_size": vocab_size,
        "tokens": list(tokens),
    }
    if gold_answer is not None:
        obj["gold_answer"] = gold_answer
    if prompt is not None:
        obj["prompt"] = prompt
    if resamples is not None:
        obj["resamples"] = list(resamples)
    return obj


def write_jsonl_atomic(objs: Iterable[dict], path: str | Path) -> int:
    """Single-writer append to a temp file, finished by an atomic rename."""
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    count = 0
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        for obj in objs:
            fh.write(json.dumps(obj, ensure_ascii=False, separators=(",", ":")))
            fh.write("\n")
            count += 1
    os.replace(tmp, path)
    return count


def write_embedding_files(
    ids: Sequence[str], vectors: np.ndarray, prefix: str | Path
) -> None:
    """File pair: <prefix>.json header + <prefix>.bin row-major <f4 matrix."""
    prefix = Path(prefix)
    matrix = np.ascontiguousarray(vectors, dtype="<f4")
    if matrix.ndim != 2 or matrix.shape[0] != len(ids):
        raise ValueError(f"vector matrix {matrix.shape} does not match {len(ids)} ids")
    header = {
        "dim": int(matrix.shape[1]),
        "count": int(matrix.shape[0]),
        "dtype": "f32",
        "ids": list(ids),
    }
    prefix.with_suffix(".json").write_text(json.dumps(header, sort_keys=True), encoding="utf-8")
    prefix.with_suffix(".bin").write_bytes(matrix.tobytes())


def read_prompts(path: str | Path) -> list[dict]:
    """Prompt file: JSONL with sample_id, prompt, and optional gold_answer,
    dataset_id, task_kind per line."""
    prompts = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            obj = json.loads(line)
            if "sample_id" not in obj or "prompt" not in obj:
                raise ValueError(f"{path}:{line_number}: prompt lines need sample_id and prompt")
            prompts.append(obj)
    return prompts
