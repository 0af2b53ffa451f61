"""Core domain types: records, score/performance tables, embedding sets.

All types validate their invariants at construction time and are immutable
afterwards, so instances can be shared freely across threads.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

TOPK_MASS_TOLERANCE = 1e-6


class TaskKind(Enum):
    MCVQ = "mcvq"
    VQA = "vqa"


class Direction(Enum):
    HIGHER_IS_BETTER = "higher_is_better"
    LOWER_IS_BETTER = "lower_is_better"


class MethodKind(Enum):
    """The closed set of proxy scoring methods plus the two baselines."""

    NLL_F = "nll_f"
    NLL_P = "nll_p"
    NLL_MIN = "nll_min"
    NLL_AVG = "nll_avg"
    ENT_F = "ent_f"
    ENT_P = "ent_p"
    ENT_MAX = "ent_max"
    ENT_AVG = "ent_avg"
    SAMPLE_BLEU = "sample_bleu"
    SAMPLE_BERT = "sample_bert"
    SAMPLE_BERT_EXPANDED = "sample_bert_expanded"
    ATC = "atc"
    AOL = "aol"
    SUBSET_LABELED = "subset_labeled"


#: Methods measuring uncertainty directly: a lower score means a better model.
UNCERTAINTY_METHODS = frozenset(
    {
        MethodKind.NLL_F,
        MethodKind.NLL_P,
        MethodKind.NLL_MIN,
        MethodKind.NLL_AVG,
        MethodKind.ENT_F,
        MethodKind.ENT_P,
        MethodKind.ENT_MAX,
        MethodKind.ENT_AVG,
    }
)

#: Methods measuring consistency or estimated accuracy: higher is better.
CONFIDENCE_METHODS = frozenset(MethodKind) - UNCERTAINTY_METHODS


def method_direction(method: MethodKind) -> Direction:
    """Return the scoring direction structurally implied by the method."""
    if method in UNCERTAINTY_METHODS:
        return Direction.LOWER_IS_BETTER
    return Direction.HIGHER_IS_BETTER


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ValueError(message)


@dataclass(frozen=True)
class TokenEvent:
    """One generated token: its chosen-token log-probability and entropy.

    ``logprob`` is the natural-log probability of the chosen token and must
    be <= 0 (-inf is accepted for zero-probability logging). ``entropy_norm``
    is the full-softmax entropy divided by log vocabulary size, in [0, 1].
    ``top_logprobs`` is a fallback for logs without entropy: the k most
    probable tokens with their logprobs, strictly descending.
    """

    token_text: str
    logprob: float
    entropy_norm: float | None = None
    top_logprobs: tuple[tuple[str, float], ...] | None = None

    def __post_init__(self) -> None:
        _require(self.logprob <= 0.0, f"logprob must be <= 0, got {self.logprob}")
        if self.entropy_norm is not None:
            _require(
                0.0 <= self.entropy_norm <= 1.0,
                f"entropy_norm must lie in [0, 1], got {self.entropy_norm}",
            )
        if self.top_logprobs is not None:
            entries = tuple((str(t), float(lp)) for t, lp in self.top_logprobs)
            object.__setattr__(self, "top_logprobs", entries)
            _require(len(entries) > 0, "top_logprobs must be non-empty when present")
            lps = [lp for _, lp in entries]
            _require(
                all(a > b for a, b in zip(lps, lps[1:])),
                "top_logprobs must be strictly descending in logprob",
            )
            mass = math.fsum(math.exp(lp) for lp in lps)
            _require(
                mass <= 1.0 + TOPK_MASS_TOLERANCE,
                f"top_logprobs probability mass {mass} exceeds 1",
            )


@dataclass(frozen=True)
class ResampleEvent:
    """One stochastic re-inference of the same prompt."""

    temperature: float
    output_text: str

    def __post_init__(self) -> None:
        _require(self.temperature > 0.0, "resample temperature must be > 0")


@dataclass(frozen=True)
class GenerationRecord:
    """One model response to one sample.

    ``tokens`` holds content tokens only; the end-of-sequence token is
    excluded, so the last element is the token preceding EOS (the
    "penultimate" position used by positional scores).
    """

    model_id: str
    dataset_id: str
    sample_id: str
    task_kind: TaskKind
    output_text: str
    tokens: tuple[TokenEvent, ...]
    vocab_size: int
    gold_answer: str | None = None
    correct: bool | None = None
    resamples: tuple[ResampleEvent, ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if self.resamples is not None:
            object.__setattr__(self, "resamples", tuple(self.resamples))
        _require(len(self.tokens) > 0, "tokens must be non-empty")
        _require(self.vocab_size >= 2, f"vocab_size must be >= 2, got {self.vocab_size}")

    @property
    def key(self) -> tuple[str, str, str]:
        """Uniqueness key within a run."""
        return (self.model_id, self.dataset_id, self.sample_id)


def _check_entries(entries: Mapping[tuple[str, str], float]) -> dict[tuple[str, str], float]:
    out: dict[tuple[str, str], float] = {}
    for key, value in entries.items():
        model_id, dataset_id = key
        out[(str(model_id), str(dataset_id))] = float(value)
    return out


@dataclass(frozen=True)
class ScoreTable:
    """Per-model per-dataset proxy scores for one method."""

    method: MethodKind
    direction: Direction
    entries: Mapping[tuple[str, str], float]

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", _check_entries(self.entries))
        _require(
            self.direction is method_direction(self.method),
            f"direction {self.direction.value} inconsistent with method {self.method.value}",
        )

    @classmethod
    def for_method(cls, method: MethodKind, entries: Mapping[tuple[str, str], float]) -> "ScoreTable":
        return cls(method=method, direction=method_direction(method), entries=entries)

    def datasets(self) -> list[str]:
        return sorted({d for _, d in self.entries})

    def models(self, dataset_id: str | None = None) -> list[str]:
        if dataset_id is None:
            return sorted({m for m, _ in self.entries})
        return sorted({m for m, d in self.entries if d == dataset_id})

    def column(self, dataset_id: str) -> dict[str, float]:
        return {m: v for (m, d), v in self.entries.items() if d == dataset_id}

    def to_json_obj(self) -> dict:
        return {
            "method": self.method.value,
            "direction": self.direction.value,
            "entries": [
                {"model_id": m, "dataset_id": d, "score": v}
                for (m, d), v in sorted(self.entries.items())
            ],
        }

    @classmethod
    def from_json_obj(cls, obj: Mapping) -> "ScoreTable":
        entries = {(e["model_id"], e["dataset_id"]): float(e["score"]) for e in obj["entries"]}
        return cls(
            method=MethodKind(obj["method"]),
            direction=Direction(obj["direction"]),
            entries=entries,
        )


@dataclass(frozen=True)
class PerformanceTable:
    """Ground-truth per-model per-dataset performance, each value in [0, 1]."""

    metric_name: str
    entries: Mapping[tuple[str, str], float]

    def __post_init__(self) -> None:
        checked = _check_entries(self.entries)
        for key, value in checked.items():
            _require(0.0 <= value <= 1.0, f"performance {value} for {key} outside [0, 1]")
        object.__setattr__(self, "entries", checked)

    def datasets(self) -> list[str]:
        return sorted({d for _, d in self.entries})

    def models(self, dataset_id: str | None = None) -> list[str]:
        if dataset_id is None:
            return sorted({m for m, _ in self.entries})
        return sorted({m for m, d in self.entries if d == dataset_id})

    def column(self, dataset_id: str) -> dict[str, float]:
        return {m: v for (m, d), v in self.entries.items() if d == dataset_id}

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["model_id", "dataset_id", "score"])
        for (m, d), v in sorted(self.entries.items()):
            writer.writerow([m, d, repr(v)])
        return buf.getvalue()

    def save_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv_text(), encoding="utf-8")

    @classmethod
    def from_csv_text(cls, text: str, metric_name: str = "accuracy") -> "PerformanceTable":
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header != ["model_id", "dataset_id", "score"]:
            raise ValueError(f"unexpected performance CSV header: {header}")
        entries = {}
        for row in reader:
            if not row:
                continue
            m, d, v = row
            entries[(m, d)] = float(v)
        return cls(metric_name=metric_name, entries=entries)

    @classmethod
    def load_csv(cls, path: str | Path, metric_name: str = "accuracy") -> "PerformanceTable":
        return cls.from_csv_text(Path(path).read_text(encoding="utf-8"), metric_name)


@dataclass(frozen=True, eq=False)
class EmbeddingSet:
    """Fixed-dimension float32 vectors addressed by string ids.

    On disk this is a file pair: ``<prefix>.json`` holding
    ``{"dim", "count", "dtype": "f32", "ids"}`` and ``<prefix>.bin`` holding
    the row-major little-endian float32 matrix.
    """

    ids: tuple[str, ...]
    dim: int
    vectors: np.ndarray
    _index: dict[str, int] = field(repr=False, default_factory=dict)

    def __post_init__(self) -> None:
        ids = tuple(str(i) for i in self.ids)
        object.__setattr__(self, "ids", ids)
        vectors = np.ascontiguousarray(self.vectors, dtype=np.float32)
        _require(vectors.ndim == 2, "vectors must be a 2-D matrix")
        _require(self.dim > 0, "dim must be positive")
        _require(vectors.shape == (len(ids), self.dim), "vector matrix shape must be count x dim")
        _require(bool(np.all(np.isfinite(vectors))), "vectors must be finite")
        _require(len(set(ids)) == len(ids), "embedding ids must be unique")
        vectors.flags.writeable = False
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "_index", {i: row for row, i in enumerate(ids)})

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmbeddingSet):
            return NotImplemented
        return (
            self.ids == other.ids
            and self.dim == other.dim
            and np.array_equal(self.vectors, other.vectors)
        )

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, id_: str) -> bool:
        return id_ in self._index

    def vector(self, id_: str) -> np.ndarray:
        row = self._index.get(id_)
        if row is None:
            raise KeyError(id_)
        return self.vectors[row]

    def save(self, prefix: str | Path) -> None:
        prefix = Path(prefix)
        header = {"dim": self.dim, "count": len(self.ids), "dtype": "f32", "ids": list(self.ids)}
        prefix.with_suffix(".json").write_text(
            json.dumps(header, sort_keys=True), encoding="utf-8"
        )
        prefix.with_suffix(".bin").write_bytes(
            np.ascontiguousarray(self.vectors, dtype="<f4").tobytes()
        )

    @classmethod
    def load(cls, prefix: str | Path) -> "EmbeddingSet":
        prefix = Path(prefix)
        header = json.loads(prefix.with_suffix(".json").read_text(encoding="utf-8"))
        if header.get("dtype") != "f32":
            raise ValueError(f"unsupported embedding dtype: {header.get('dtype')}")
        dim = int(header["dim"])
        count = int(header["count"])
        ids = tuple(header["ids"])
        if len(ids) != count:
            raise ValueError(f"embedding header count {count} != number of ids {len(ids)}")
        raw = np.frombuffer(prefix.with_suffix(".bin").read_bytes(), dtype="<f4")
        if raw.size != count * dim:
            raise ValueError(
                f"embedding binary holds {raw.size} floats, expected {count * dim}"
            )
        return cls(ids=ids, dim=dim, vectors=raw.reshape(count, dim).copy())

    @classmethod
    def from_rows(cls, rows: Iterable[tuple[str, np.ndarray]]) -> "EmbeddingSet":
        pairs = list(rows)
        if not pairs:
            raise ValueError("cannot build an embedding set from zero rows")
        matrix = np.stack([np.asarray(v, dtype=np.float32) for _, v in pairs])
        return cls(ids=tuple(i for i, _ in pairs), dim=matrix.shape[1], vectors=matrix)
