"""Text and image embedding extraction into the engine's file-pair format.

Texts embed as the attention-masked mean of the encoder's last hidden
state, L2-normalized. Images run through the encoder's image processor and
pool the same way. Per-item failures are logged and skipped.
"""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import torch
from transformers import AutoModel, AutoTokenizer

from .records import write_embedding_files

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


def _pool(last_hidden: torch.Tensor, mask: torch.Tensor | None) -> torch.Tensor:
    if mask is None:
        return last_hidden.mean(dim=1)
    mask = mask.unsqueeze(-1).to(last_hidden.dtype)
    return (last_hidden * mask).sum(dim=1) / mask.sum(dim=1).clamp(min=1.0)


def _normalize(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    return matrix / np.clip(norms, 1e-12, None)


def extract_text_embeddings(
    items: Sequence[tuple[str, str]], encoder_ref: str, device: str = "cpu"
) -> tuple[list[str], np.ndarray]:
    """One row per (id, text) item, in input order."""
    tokenizer = AutoTokenizer.from_pretrained(encoder_ref)
    model = AutoModel.from_pretrained(encoder_ref).to(device)
    model.eval()
    ids, rows = [], []
    for item_id, text in items:
        try:
            inputs = tokenizer(text, return_tensors="pt", truncation=True).to(device)
            with torch.no_grad():
                out = model(**inputs)
            pooled = _pool(out.last_hidden_state, inputs.get("attention_mask"))
            rows.append(pooled[0].to(torch.float32).cpu().numpy())
            ids.append(item_id)
        except Exception as exc:
            logger.warning("text item %s failed: %s", item_id, exc)
    if not rows:
        raise RuntimeError("no text items could be embedded")
    return ids, _normalize(np.stack(rows))


def extract_image_embeddings(
    paths: Iterable[Path], encoder_ref: str, device: str = "cpu"
) -> tuple[list[str], np.ndarray]:
    """One row per image file; ids are the file names."""
    from PIL import Image
    from transformers import AutoImageProcessor

    processor = AutoImageProcessor.from_pretrained(encoder_ref)
    model = AutoModel.from_pretrained(encoder_ref).to(device)
    model.eval()
    ids, rows = [], []
    for path in paths:
        try:
            image = Image.open(path).convert("RGB")
            inputs = processor(images=image, return_tensors="pt").to(device)
            with torch.no_grad():
                out = model(**inputs)
            pooled = _pool(out.last_hidden_state, None)
            rows.append(pooled[0].to(torch.float32).cpu().numpy())
            ids.append(path.name)
        except Exception as exc:
            logger.warning("image %s failed: %s", path, exc)
    if not rows:
        raise RuntimeError("no images could be embedded")
    return ids, _normalize(np.stack(rows))


def embed_texts_file(texts_path: str | Path, encoder_ref: str, out_prefix: str | Path) -> int:
    """Texts file: JSONL lines {"id": ..., "text": ...}."""
    import json

    items = []
    with open(texts_path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            items.append((str(obj["id"]), str(obj["text"])))
    ids, matrix = extract_text_embeddings(items, encoder_ref)
    write_embedding_files(ids, matrix, out_prefix)
    return len(ids)


def embed_images_dir(images_dir: str | Path, encoder_ref: str, out_prefix: str | Path) -> int:
    paths = sorted(
        p for p in Path(images_dir).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES
    )
    if not paths:
        raise RuntimeError(f"no images found under {images_dir}")
    ids, matrix = extract_image_embeddings(paths, encoder_ref)
    write_embedding_files(ids, matrix, out_prefix)
    return len(ids)
