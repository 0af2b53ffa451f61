"""Deterministic synthetic model ensembles with known ground truth.

The generator builds an ensemble whose per-token probabilities rise with
each model's target accuracy, so uncertainty scores are anti-correlated
with accuracy by construction. A calibration-noise knob applies a
per-model multiplicative bias on the NLL scale, degrading that relationship
in a controlled way.

Randomness uses the Philox counter-based generator with one independent
stream per (model, sample), so output is identical regardless of how
generation work is scheduled.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .core import (
    GenerationRecord,
    PerformanceTable,
    ResampleEvent,
    TaskKind,
    TokenEvent,
)
from .ingest import write_jsonl

_MCVQ_LETTERS = "ABCD"
_BETA_CONCENTRATION = 25.0

# Stream tags keep model-level, sample-level, and per-response draws on
# disjoint Philox keys.
_KIND_MODEL = 0
_KIND_SAMPLE_META = 1
_KIND_RESPONSE = 2


@dataclass(frozen=True)
class EnsembleConfig:
    n_models: int
    n_samples: int
    task_kind: TaskKind = TaskKind.VQA
    accuracy_range: tuple[float, float] = (0.2, 0.9)
    calibration_noise: float = 0.0
    vocab_sizes: tuple[int, ...] = (32000,)
    resamples_per_record: int = 0
    temperature: float = 0.7
    seed: int = 0
    dataset_id: str = "synth"

    def __post_init__(self) -> None:
        object.__setattr__(self, "accuracy_range", tuple(self.accuracy_range))
        object.__setattr__(self, "vocab_sizes", tuple(int(v) for v in self.vocab_sizes))
        lo, hi = self.accuracy_range
        if not (0.0 <= lo < hi <= 1.0):
            raise ValueError(f"accuracy_range must satisfy 0 <= lo < hi <= 1, got {self.accuracy_range}")
        if self.n_models < 2:
            raise ValueError("n_models must be >= 2")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.calibration_noise < 0.0:
            raise ValueError("calibration_noise must be >= 0")
        if not self.vocab_sizes or any(v < 2 for v in self.vocab_sizes):
            raise ValueError("vocab_sizes must be non-empty with every size >= 2")
        if self.resamples_per_record < 0:
            raise ValueError("resamples_per_record must be >= 0")
        if self.temperature <= 0.0:
            raise ValueError("temperature must be > 0")

    def model_id(self, index: int) -> str:
        return f"m{index:03d}"

    def target_accuracy(self, index: int) -> float:
        lo, hi = self.accuracy_range
        return lo + (hi - lo) * index / (self.n_models - 1)


@dataclass(frozen=True)
class EnsembleResult:
    records: tuple[GenerationRecord, ...]
    truth: PerformanceTable
    true_order: tuple[str, ...]


def _stream(seed: int, kind: int, model_index: int, sample_index: int = 0) -> np.random.Generator:
    tag = (kind << 60) | (model_index << 32) | sample_index
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, tag & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _mean_token_prob(accuracy: float, correct: bool) -> float:
    # Correct answers carry visibly higher token probability; both means
    # rise with model accuracy so NLL orders models even off the diagonal.
    if correct:
        return 0.55 + 0.40 * accuracy
    return 0.35 + 0.20 * accuracy


def _gold_token_count(cfg: EnsembleConfig, sample_index: int) -> int:
    g = _stream(cfg.seed, _KIND_SAMPLE_META, 0, sample_index)
    return int(g.integers(3, 13))


def _binary_entropy_norm(p: float, vocab_size: int) -> float:
    # Two-point surrogate: chosen token p, one alternative 1-p.
    q = 1.0 - p
    h = 0.0
    if p > 0.0:
        h -= p * math.log(p)
    if q > 0.0:
        h -= q * math.log(q)
    return min(max(h / math.log(vocab_size), 0.0), 1.0)


def _make_tokens(
    g: np.random.Generator,
    texts: list[str],
    mean_prob: float,
    bias: float,
    vocab_size: int,
) -> tuple[TokenEvent, ...]:
    kappa = _BETA_CONCENTRATION
    probs = g.beta(mean_prob * kappa, (1.0 - mean_prob) * kappa, size=len(texts))
    probs = np.clip(probs, 1e-12, 1.0 - 1e-12)
    events = []
    for text, p in zip(texts, probs):
        logprob = float(math.log(p) * bias)
        p_eff = math.exp(logprob)
        events.append(
            TokenEvent(
                token_text=text,
                logprob=logprob,
                entropy_norm=_binary_entropy_norm(p_eff, vocab_size),
            )
        )
    return tuple(events)


def _iter_records(cfg: EnsembleConfig) -> Iterator[tuple[int, GenerationRecord]]:
    biases = {}
    for m in range(cfg.n_models):
        g_model = _stream(cfg.seed, _KIND_MODEL, m)
        biases[m] = math.exp(cfg.calibration_noise * float(g_model.standard_normal()))
    gold_lengths = None
    if cfg.task_kind is TaskKind.VQA:
        gold_lengths = [_gold_token_count(cfg, s) for s in range(cfg.n_samples)]
    for m in range(cfg.n_models):
        accuracy = cfg.target_accuracy(m)
        vocab_size = cfg.vocab_sizes[m % len(cfg.vocab_sizes)]
        agree_prob = 0.15 + 0.80 * accuracy
        for s in range(cfg.n_samples):
            g = _stream(cfg.seed, _KIND_RESPONSE, m, s)
            correct = bool(g.random() < accuracy)
            if cfg.task_kind is TaskKind.MCVQ:
                gold = _MCVQ_LETTERS[s % len(_MCVQ_LETTERS)]
                if correct:
                    answer = gold
                else:
                    others = [c for c in _MCVQ_LETTERS if c != gold]
                    answer = others[int(g.integers(0, len(others)))]
                texts = [answer]
                output_text = answer
                gold_answer = gold
            else:
                count = gold_lengths[s]
                gold_words = [f"w{s}x{k}" for k in range(count)]
                words = gold_words if correct else [f"u{m}x{s}x{k}" for k in range(count)]
                texts = words
                output_text = " ".join(words)
                gold_answer = " ".join(gold_words)
            tokens = _make_tokens(
                g, texts, _mean_token_prob(accuracy, correct), biases[m], vocab_size
            )
            resamples = None
            if cfg.resamples_per_record > 0:
                events = []
                for k in range(cfg.resamples_per_record):
                    if g.random() < agree_prob:
                        text = output_text
                    elif cfg.task_kind is TaskKind.MCVQ:
                        others = [c for c in _MCVQ_LETTERS if c != output_text]
                        text = others[int(g.integers(0, len(others)))]
                    else:
                        text = " ".join(f"r{k}x{s}x{i}" for i in range(len(texts)))
                    events.append(ResampleEvent(temperature=cfg.temperature, output_text=text))
                resamples = tuple(events)
            record = GenerationRecord(
                model_id=cfg.model_id(m),
                dataset_id=cfg.dataset_id,
                sample_id=f"s{s:05d}",
                task_kind=cfg.task_kind,
                output_text=output_text,
                tokens=tokens,
                vocab_size=vocab_size,
                gold_answer=gold_answer,
                correct=correct,
                resamples=resamples,
            )
            yield m, record


def generate_ensemble(cfg: EnsembleConfig) -> EnsembleResult:
    """Generate all records plus the realized-accuracy truth table.

    ``true_order`` lists model ids by target accuracy, best first; ``truth``
    holds realized (sampled) accuracy, which is what scores are judged
    against.
    """
    records = []
    correct_counts = np.zeros(cfg.n_models, dtype=np.int64)
    for m, record in _iter_records(cfg):
        records.append(record)
        if record.correct:
            correct_counts[m] += 1
    entries = {
        (cfg.model_id(m), cfg.dataset_id): correct_counts[m] / cfg.n_samples
        for m in range(cfg.n_models)
    }
    order = sorted(range(cfg.n_models), key=lambda m: (-cfg.target_accuracy(m), cfg.model_id(m)))
    return EnsembleResult(
        records=tuple(records),
        truth=PerformanceTable(metric_name="accuracy", entries=entries),
        true_order=tuple(cfg.model_id(m) for m in order),
    )


def write_ensemble(
    cfg: EnsembleConfig, logs_path: str | Path, truth_path: str | Path | None = None
) -> EnsembleResult:
    """Generate an ensemble and write it in the external JSONL format."""
    result = generate_ensemble(cfg)
    write_jsonl(result.records, logs_path)
    if truth_path is not None:
        result.truth.save_csv(truth_path)
    return result
