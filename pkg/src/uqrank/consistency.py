"""Self-consistency scores over stochastic resamples of the same prompt.

A record's consistency is the mean similarity between each resample and the
original greedy answer. Two similarity backends: unigram BLEU on token
multisets, and cosine over precomputed sentence embeddings (higher-is-better
in both cases, on a shared [0, 1] scale).
"""
from __future__ import annotations

import math
import string
from collections import Counter
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .core import EmbeddingSet, GenerationRecord, TaskKind
from .errors import DegenerateInputError, MissingEmbeddingError, RuleError
from .ingest import extract_option_letter


class SimilarityKind(Enum):
    BLEU1 = "bleu1"
    EMBED_COSINE = "embed_cosine"


class ExpansionRule(Enum):
    RAW = "raw"
    EXPANDED_ANSWER = "expanded_answer"


_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def bleu_tokens(text: str) -> list[str]:
    """Lowercased whitespace tokens with ASCII punctuation removed."""
    return text.translate(_PUNCT_TABLE).lower().split()


def bleu1(candidate: str, reference: str) -> float:
    """Unigram BLEU: clipped precision times the brevity penalty.

    Empty candidate scores 0 unless the reference is empty too, which
    scores 1 (both sides silent agree).
    """
    cand = bleu_tokens(candidate)
    ref = bleu_tokens(reference)
    if not cand:
        return 1.0 if not ref else 0.0
    if not ref:
        return 0.0
    ref_counts = Counter(ref)
    cand_counts = Counter(cand)
    clipped = sum(min(count, ref_counts[token]) for token, count in cand_counts.items())
    precision = clipped / len(cand)
    c, r = len(cand), len(ref)
    brevity = 1.0 if c >= r else math.exp(1.0 - r / c)
    return brevity * precision


def embed_cosine(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DegenerateInputError(f"embedding dims differ: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise DegenerateInputError("cosine similarity is undefined for a zero vector")
    return float(np.dot(a, b) / (na * nb))


def orig_embedding_id(model_id: str, sample_id: str) -> str:
    """Embedding-set id of one model's original (greedy) answer to a sample.

    Answers are model-specific, so the model qualifier keeps ids unique
    within the one embedding file a dataset shares across models.
    """
    return f"{model_id}::{sample_id}::orig"


def resample_embedding_id(model_id: str, sample_id: str, index: int) -> str:
    """Embedding-set id of the ``index``-th (0-based) resample."""
    return f"{model_id}::{sample_id}::{index}"


def expand_answer(text: str, options: Mapping[str, str]) -> str:
    """Rewrite an option-letter answer to include the full option text.

    "B" becomes "B. <option text>". A letter absent from the option map is
    an error; text without any option letter passes through unchanged (it
    already carries its own content).
    """
    letter = extract_option_letter(text)
    if letter is None:
        return text
    if letter not in options:
        raise RuleError(f"option letter {letter!r} not present in the option map")
    return f"{letter}. {options[letter]}"


def _lookup(embeddings: EmbeddingSet | None, id_: str) -> np.ndarray:
    if embeddings is None:
        raise MissingEmbeddingError("embed_cosine similarity requires an embedding set")
    try:
        return embeddings.vector(id_)
    except KeyError:
        raise MissingEmbeddingError(f"embedding row {id_!r} is missing")


def self_consistency(
    record: GenerationRecord,
    sim: SimilarityKind,
    expansion: ExpansionRule = ExpansionRule.RAW,
    embeddings: EmbeddingSet | None = None,
    options: Mapping[str, Mapping[str, str]] | None = None,
) -> float:
    """Mean similarity of each resample to the original answer, in [0, 1].

    Under EXPANDED_ANSWER both the original and every resample of an MCVQ
    record are expanded before comparison; cosine values below zero clamp
    to 0 so both backends share the BLEU scale.
    """
    if not record.resamples:
        raise DegenerateInputError(f"record {record.key} has no resamples")
    orig_text = record.output_text
    resample_texts = [r.output_text for r in record.resamples]
    if expansion is ExpansionRule.EXPANDED_ANSWER and record.task_kind is TaskKind.MCVQ:
        if options is None or record.sample_id not in options:
            raise RuleError(f"no option map for sample {record.sample_id!r}")
        sample_options = options[record.sample_id]
        orig_text = expand_answer(orig_text, sample_options)
        resample_texts = [expand_answer(t, sample_options) for t in resample_texts]
    if sim is SimilarityKind.BLEU1:
        sims = [bleu1(text, orig_text) for text in resample_texts]
    else:
        v_orig = _lookup(embeddings, orig_embedding_id(record.model_id, record.sample_id))
        sims = []
        for index in range(len(record.resamples)):
            v = _lookup(embeddings, resample_embedding_id(record.model_id, record.sample_id, index))
            sims.append(max(0.0, embed_cosine(v, v_orig)))
    return math.fsum(sims) / len(sims)


def consistency_dataset_score(
    records: Sequence[GenerationRecord],
    sim: SimilarityKind,
    expansion: ExpansionRule = ExpansionRule.RAW,
    embeddings: EmbeddingSet | None = None,
    options: Mapping[str, Mapping[str, str]] | None = None,
) -> float:
    """Mean self-consistency over one (model, dataset) cell."""
    if not records:
        raise DegenerateInputError("consistency_dataset_score requires records")
    cell = records[0].key[:2]
    for record in records:
        if record.key[:2] != cell:
            raise DegenerateInputError(
                f"records mix cells {cell} and {record.key[:2]}; score one cell at a time"
            )
    scores = [
        self_consistency(r, sim, expansion=expansion, embeddings=embeddings, options=options)
        for r in records
    ]
    return math.fsum(scores) / len(scores)
