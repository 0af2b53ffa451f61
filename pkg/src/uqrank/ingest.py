"""Parsing, validation, and correctness scoring of inference logs.

Logs are UTF-8 JSONL, one record object per line. Parsing is total: any
byte stream terminates with every non-blank line either accepted as a
record or reported as exactly one error entry.
"""
from __future__ import annotations

import json
import math
import re
import string
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import IO, Iterable, Iterator, Mapping, Sequence

from .core import (
    TOPK_MASS_TOLERANCE,
    GenerationRecord,
    PerformanceTable,
    ResampleEvent,
    TaskKind,
    TokenEvent,
)
from .errors import RuleError

REQUIRED_KEYS = ("model_id", "dataset_id", "sample_id", "task_kind", "output_text", "vocab_size", "tokens")
OPTIONAL_KEYS = ("gold_answer", "correct", "prompt", "resamples")

# Standalone option letter: preceded by start/whitespace/'(' and followed by
# end/whitespace/'.'/')'. Covers the forms "X", "X.", "X)" and "(X)".
_OPTION_LETTER_RE = re.compile(r"(?:(?<=^)|(?<=[\s(]))([A-H])(?=$|[\s.)])")

_PUNCT_STRIP = string.punctuation + " \t"
_ARTICLES = ("a", "an", "the")


@dataclass(frozen=True)
class ReportEntry:
    line_number: int
    code: str
    message: str


@dataclass
class ValidationReport:
    """Per-line accounting of a parsed log stream.

    records_accepted + len(errors) equals the number of non-blank lines
    processed; blank lines are skipped with a warning.
    """

    records_accepted: int = 0
    errors: list[ReportEntry] = field(default_factory=list)
    warnings: list[ReportEntry] = field(default_factory=list)

    def merge(self, other: "ValidationReport") -> None:
        self.records_accepted += other.records_accepted
        self.errors.extend(other.errors)
        self.warnings.extend(other.warnings)

    @property
    def ok(self) -> bool:
        return not self.errors


class _LineError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _expect_str(obj: Mapping, key: str) -> str:
    value = obj[key]
    if not isinstance(value, str):
        raise _LineError("BAD_TYPE", f"{key} must be a string, got {type(value).__name__}")
    return value


def _expect_number(value, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise _LineError("BAD_TYPE", f"{what} must be a number, got {type(value).__name__}")
    return float(value)


def _parse_token(obj, position: int) -> TokenEvent:
    if not isinstance(obj, dict):
        raise _LineError("BAD_TYPE", f"tokens[{position}] must be an object")
    for key in ("token_text", "logprob"):
        if key not in obj:
            raise _LineError("MISSING_FIELD", f"tokens[{position}] missing {key}")
    token_text = _expect_str(obj, "token_text")
    logprob = _expect_number(obj["logprob"], f"tokens[{position}].logprob")
    if not logprob <= 0.0:
        raise _LineError(
            "LOGPROB_POSITIVE", f"tokens[{position}].logprob must be <= 0, got {logprob}"
        )
    entropy_norm = None
    if obj.get("entropy_norm") is not None:
        entropy_norm = _expect_number(obj["entropy_norm"], f"tokens[{position}].entropy_norm")
        if not 0.0 <= entropy_norm <= 1.0:
            raise _LineError(
                "ENTROPY_RANGE",
                f"tokens[{position}].entropy_norm must lie in [0, 1], got {entropy_norm}",
            )
    top_logprobs = None
    if obj.get("top_logprobs") is not None:
        raw = obj["top_logprobs"]
        if not isinstance(raw, list) or not raw:
            raise _LineError("TOPK_INVALID", f"tokens[{position}].top_logprobs must be a non-empty array")
        pairs = []
        for entry in raw:
            if not isinstance(entry, (list, tuple)) or len(entry) != 2 or not isinstance(entry[0], str):
                raise _LineError(
                    "TOPK_INVALID", f"tokens[{position}].top_logprobs entries must be [text, logprob] pairs"
                )
            pairs.append((entry[0], _expect_number(entry[1], "top_logprobs logprob")))
        lps = [lp for _, lp in pairs]
        if not all(a > b for a, b in zip(lps, lps[1:])):
            raise _LineError(
                "TOPK_INVALID", f"tokens[{position}].top_logprobs must be strictly descending"
            )
        if math.fsum(math.exp(lp) for lp in lps) > 1.0 + TOPK_MASS_TOLERANCE:
            raise _LineError(
                "TOPK_INVALID", f"tokens[{position}].top_logprobs probability mass exceeds 1"
            )
        top_logprobs = tuple(pairs)
    return TokenEvent(
        token_text=token_text, logprob=logprob, entropy_norm=entropy_norm, top_logprobs=top_logprobs
    )


def _parse_record(obj) -> GenerationRecord:
    if not isinstance(obj, dict):
        raise _LineError("NOT_OBJECT", "line is not a JSON object")
    for key in REQUIRED_KEYS:
        if key not in obj:
            raise _LineError("MISSING_FIELD", f"missing required key {key}")
    task_raw = _expect_str(obj, "task_kind")
    try:
        task_kind = TaskKind(task_raw)
    except ValueError:
        raise _LineError("BAD_TASK_KIND", f"task_kind must be 'mcvq' or 'vqa', got {task_raw!r}")
    vocab = obj["vocab_size"]
    if isinstance(vocab, bool) or not isinstance(vocab, int) or vocab < 2:
        raise _LineError("BAD_VOCAB", f"vocab_size must be an integer >= 2, got {vocab!r}")
    tokens_raw = obj["tokens"]
    if not isinstance(tokens_raw, list):
        raise _LineError("BAD_TYPE", "tokens must be an array")
    if not tokens_raw:
        raise _LineError("EMPTY_TOKENS", "tokens must be non-empty")
    tokens = tuple(_parse_token(t, i) for i, t in enumerate(tokens_raw))
    gold_answer = None
    if obj.get("gold_answer") is not None:
        gold_answer = _expect_str(obj, "gold_answer")
    correct = obj.get("correct")
    if correct is not None and not isinstance(correct, bool):
        raise _LineError("BAD_TYPE", f"correct must be a boolean, got {correct!r}")
    resamples = None
    if obj.get("resamples") is not None:
        raw = obj["resamples"]
        if not isinstance(raw, list):
            raise _LineError("BAD_RESAMPLE", "resamples must be an array")
        events = []
        for i, entry in enumerate(raw):
            if not isinstance(entry, dict) or "temperature" not in entry or "output_text" not in entry:
                raise _LineError(
                    "BAD_RESAMPLE", f"resamples[{i}] must hold temperature and output_text"
                )
            temperature = _expect_number(entry["temperature"], f"resamples[{i}].temperature")
            if not temperature > 0.0:
                raise _LineError("BAD_RESAMPLE", f"resamples[{i}].temperature must be > 0")
            events.append(
                ResampleEvent(temperature=temperature, output_text=_expect_str(entry, "output_text"))
            )
        resamples = tuple(events)
    return GenerationRecord(
        model_id=_expect_str(obj, "model_id"),
        dataset_id=_expect_str(obj, "dataset_id"),
        sample_id=_expect_str(obj, "sample_id"),
        task_kind=task_kind,
        output_text=_expect_str(obj, "output_text"),
        tokens=tokens,
        vocab_size=vocab,
        gold_answer=gold_answer,
        correct=correct,
        resamples=resamples,
    )


def _iter_lines(stream) -> Iterator[str]:
    if isinstance(stream, (str, bytes)):
        raise TypeError("parse_log_stream expects a file object or an iterable of lines")
    for line in stream:
        if isinstance(line, bytes):
            yield line.decode("utf-8", errors="replace")
        else:
            yield line


def parse_log_stream(
    stream: IO[bytes] | IO[str] | Iterable[str | bytes],
    seen_keys: set[tuple[str, str, str]] | None = None,
) -> tuple[list[GenerationRecord], ValidationReport]:
    """Parse one JSONL log stream into validated records plus a report.

    ``seen_keys`` lets callers share the (model, dataset, sample) uniqueness
    check across several files of the same run.
    """
    if seen_keys is None:
        seen_keys = set()
    records: list[GenerationRecord] = []
    report = ValidationReport()
    for line_number, line in enumerate(_iter_lines(stream), start=1):
        if not line.strip():
            report.warnings.append(ReportEntry(line_number, "BLANK_LINE", "blank line skipped"))
            continue
        try:
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise _LineError("BAD_JSON", f"invalid JSON: {exc}") from exc
            record = _parse_record(obj)
            if record.key in seen_keys:
                raise _LineError(
                    "DUPLICATE_KEY",
                    f"duplicate (model_id, dataset_id, sample_id) = {record.key}",
                )
            if isinstance(obj, dict):
                for key in obj:
                    if key not in REQUIRED_KEYS and key not in OPTIONAL_KEYS:
                        report.warnings.append(
                            ReportEntry(line_number, "UNKNOWN_KEY", f"ignoring unknown key {key!r}")
                        )
            seen_keys.add(record.key)
            records.append(record)
            report.records_accepted += 1
        except _LineError as exc:
            report.errors.append(ReportEntry(line_number, exc.code, str(exc)))
        except ValueError as exc:
            # Constructor-level invariant violations not caught above.
            report.errors.append(ReportEntry(line_number, "INVALID_RECORD", str(exc)))
    return records, report


def parse_log_file(
    path: str | Path, seen_keys: set[tuple[str, str, str]] | None = None
) -> tuple[list[GenerationRecord], ValidationReport]:
    with open(path, "rb") as fh:
        return parse_log_stream(fh, seen_keys=seen_keys)


def record_to_json_obj(record: GenerationRecord) -> dict:
    """External JSONL form of a record, with a stable key order."""
    tokens = []
    for ev in record.tokens:
        tok: dict = {"token_text": ev.token_text, "logprob": ev.logprob}
        if ev.entropy_norm is not None:
            tok["entropy_norm"] = ev.entropy_norm
        if ev.top_logprobs is not None:
            tok["top_logprobs"] = [[t, lp] for t, lp in ev.top_logprobs]
        tokens.append(tok)
    obj = {
        "model_id": record.model_id,
        "dataset_id": record.dataset_id,
        "sample_id": record.sample_id,
        "task_kind": record.task_kind.value,
        "output_text": record.output_text,
        "vocab_size": record.vocab_size,
        "tokens": tokens,
    }
    if record.gold_answer is not None:
        obj["gold_answer"] = record.gold_answer
    if record.correct is not None:
        obj["correct"] = record.correct
    if record.resamples is not None:
        obj["resamples"] = [
            {"temperature": r.temperature, "output_text": r.output_text} for r in record.resamples
        ]
    return obj


def record_to_json_line(record: GenerationRecord) -> str:
    return json.dumps(record_to_json_obj(record), ensure_ascii=False, separators=(",", ":"))


def write_jsonl(records: Iterable[GenerationRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for record in records:
            fh.write(record_to_json_line(record))
            fh.write("\n")


class RuleKind(Enum):
    EXACT_NORMALIZED = "exact_normalized"
    MCVQ_OPTION_LETTER = "mcvq_option_letter"
    RELAXED_NUMERIC = "relaxed_numeric"
    CONTAINS_NORMALIZED = "contains_normalized"


@dataclass(frozen=True)
class CorrectnessRule:
    kind: RuleKind
    tolerance: float | None = None

    def __post_init__(self) -> None:
        if self.kind is RuleKind.RELAXED_NUMERIC:
            if self.tolerance is None or not 0.0 < self.tolerance < 1.0:
                raise ValueError(f"relaxed_numeric tolerance must lie in (0, 1), got {self.tolerance}")

    @classmethod
    def parse(cls, text: str) -> "CorrectnessRule":
        """Parse the CLI form, e.g. ``exact_normalized`` or ``relaxed_numeric:0.05``."""
        kind_text, _, tol_text = text.partition(":")
        kind = RuleKind(kind_text.strip())
        tolerance = float(tol_text) if tol_text else None
        return cls(kind=kind, tolerance=tolerance)


def normalize_answer(text: str) -> str:
    """Lowercase, collapse whitespace, drop terminal punctuation and a leading article."""
    t = " ".join(text.lower().split())
    t = t.rstrip(_PUNCT_STRIP)
    words = t.split()
    if words and words[0] in _ARTICLES:
        words = words[1:]
    return " ".join(words)


def extract_option_letter(text: str) -> str | None:
    """First standalone capital option letter A-H in ``text``, if any."""
    match = _OPTION_LETTER_RE.search(text)
    return match.group(1) if match else None


def score_correctness(record: GenerationRecord, rule: CorrectnessRule) -> bool:
    """Decide whether a record's output matches its gold answer under ``rule``."""
    if record.gold_answer is None:
        raise RuleError(f"record {record.key} has no gold_answer")
    out, gold = record.output_text, record.gold_answer
    if rule.kind is RuleKind.EXACT_NORMALIZED:
        return normalize_answer(out) == normalize_answer(gold)
    if rule.kind is RuleKind.CONTAINS_NORMALIZED:
        return normalize_answer(gold) in normalize_answer(out)
    if rule.kind is RuleKind.MCVQ_OPTION_LETTER:
        gold_letter = extract_option_letter(gold)
        if gold_letter is None:
            raise RuleError(f"gold answer {gold!r} for {record.key} holds no option letter")
        return extract_option_letter(out) == gold_letter
    if rule.kind is RuleKind.RELAXED_NUMERIC:
        try:
            out_value = float(out.strip())
            gold_value = float(gold.strip())
        except ValueError:
            raise RuleError(
                f"relaxed_numeric rule inapplicable to non-numeric answers for {record.key}"
            )
        if gold_value == 0.0:
            return out_value == 0.0
        return abs(out_value - gold_value) <= rule.tolerance * abs(gold_value)
    raise RuleError(f"unknown rule kind {rule.kind}")


def record_correct(
    record: GenerationRecord, rules: Mapping[str, CorrectnessRule] | CorrectnessRule | None
) -> bool:
    """Correctness of one record; a logged flag takes precedence over rules."""
    if record.correct is not None:
        return record.correct
    if rules is None:
        raise RuleError(f"record {record.key} has no correct flag and no rule was given")
    rule = rules if isinstance(rules, CorrectnessRule) else rules.get(record.dataset_id)
    if rule is None:
        raise RuleError(f"no correctness rule configured for dataset {record.dataset_id!r}")
    return score_correctness(record, rule)


def build_performance_table(
    records: Sequence[GenerationRecord],
    rules: Mapping[str, CorrectnessRule] | CorrectnessRule | None = None,
    metric_name: str = "accuracy",
) -> PerformanceTable:
    """Mean per-sample correctness for every (model, dataset) cell present."""
    cells: dict[tuple[str, str], list[float]] = {}
    for record in records:
        try:
            value = 1.0 if record_correct(record, rules) else 0.0
        except RuleError as exc:
            raise RuleError(
                f"cell ({record.model_id}, {record.dataset_id}): {exc}"
            ) from exc
        cells.setdefault((record.model_id, record.dataset_id), []).append(value)
    entries = {key: math.fsum(values) / len(values) for key, values in cells.items()}
    return PerformanceTable(metric_name=metric_name, entries=entries)
