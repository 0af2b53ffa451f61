"""Softmax-probability uncertainty scores over generated token sequences.

Eight per-record scores are defined: negative log-likelihood (NLL) and
normalized entropy, each read at the first token, at the last content token
(the one preceding EOS), at the worst token of the sequence, or averaged
over the sequence. Lower always means more confident.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .core import GenerationRecord, MethodKind, TokenEvent, UNCERTAINTY_METHODS
from .errors import DegenerateInputError, MissingEntropyError

# -inf logprobs (zero-probability logging) clamp here before any
# exponentiation, preserving ordering while avoiding NaN propagation.
LOGPROB_FLOOR = -700.0


class TokenPosition(Enum):
    FIRST = "first"
    PENULTIMATE = "penultimate"


class SeqAggregation(Enum):
    WORST_TOKEN = "worst_token"
    MEAN = "mean"


@dataclass
class ScoreDiagnostics:
    """Counters surfaced in run reports.

    ``j1_fallbacks`` counts single-token records where the penultimate
    position fell back to the only token. Entropy counters track how often
    the top-k fallback estimator substituted for a logged entropy_norm.
    """

    j1_fallbacks: int = 0
    entropy_tokens: int = 0
    entropy_fallback_tokens: int = 0

    @property
    def entropy_fallback_rate(self) -> float:
        if self.entropy_tokens == 0:
            return 0.0
        return self.entropy_fallback_tokens / self.entropy_tokens


def _nll(event: TokenEvent) -> float:
    return -max(event.logprob, LOGPROB_FLOOR)


def _select(record: GenerationRecord, pos: TokenPosition, diag: ScoreDiagnostics | None) -> TokenEvent:
    if pos is TokenPosition.FIRST:
        return record.tokens[0]
    if len(record.tokens) == 1 and diag is not None:
        diag.j1_fallbacks += 1
    return record.tokens[-1]


def token_nll(
    record: GenerationRecord, pos: TokenPosition, diag: ScoreDiagnostics | None = None
) -> float:
    """NLL of the chosen token at ``pos``; for one-token records both
    positions resolve to the same token."""
    return _nll(_select(record, pos, diag))


def sequence_nll(record: GenerationRecord, agg: SeqAggregation) -> float:
    """Worst-token (max) or mean NLL over the whole generated sequence."""
    nlls = [_nll(ev) for ev in record.tokens]
    if agg is SeqAggregation.WORST_TOKEN:
        return max(nlls)
    return math.fsum(nlls) / len(nlls)


def perplexity(record: GenerationRecord) -> float:
    """exp of the mean per-token NLL (base e)."""
    return math.exp(sequence_nll(record, SeqAggregation.MEAN))


def entropy_from_topk(top_logprobs: Sequence[tuple[str, float]], vocab_size: int) -> float:
    """Normalized-entropy estimate from a truncated top-k distribution.

    The unobserved tail mass is lumped into a single pseudo-token, which
    biases the estimate upward relative to the exact value; result is
    clamped into [0, 1].
    """
    if not top_logprobs:
        raise DegenerateInputError("top_logprobs is empty")
    if vocab_size < 2:
        raise DegenerateInputError(f"vocab_size must be >= 2, got {vocab_size}")
    probs = [math.exp(max(lp, LOGPROB_FLOOR)) for _, lp in top_logprobs]
    mass = math.fsum(probs)
    if mass > 1.0 + 1e-6:
        raise DegenerateInputError(f"top_logprobs probability mass {mass} exceeds 1")
    remainder = max(0.0, 1.0 - mass)
    terms = [p * math.log(p) for p in probs if p > 0.0]
    if remainder > 0.0:
        terms.append(remainder * math.log(remainder))
    h = -math.fsum(terms) / math.log(vocab_size)
    return min(max(h, 0.0), 1.0)


def token_entropy(
    record: GenerationRecord, pos: TokenPosition, diag: ScoreDiagnostics | None = None
) -> float:
    """Normalized entropy at ``pos``: the logged value when present, else the
    top-k fallback estimate."""
    event = _select(record, pos, diag)
    return _event_entropy(record, event, pos.value, diag)


def _event_entropy(
    record: GenerationRecord, event: TokenEvent, where: str, diag: ScoreDiagnostics | None
) -> float:
    if diag is not None:
        diag.entropy_tokens += 1
    if event.entropy_norm is not None:
        return event.entropy_norm
    if event.top_logprobs is not None:
        if diag is not None:
            diag.entropy_fallback_tokens += 1
        return entropy_from_topk(event.top_logprobs, record.vocab_size)
    raise MissingEntropyError(
        f"record {record.key} token at {where} has neither entropy_norm nor top_logprobs"
    )


def sequence_entropy(
    record: GenerationRecord, agg: SeqAggregation, diag: ScoreDiagnostics | None = None
) -> float:
    entropies = [
        _event_entropy(record, ev, f"index {i}", diag) for i, ev in enumerate(record.tokens)
    ]
    if agg is SeqAggregation.WORST_TOKEN:
        return max(entropies)
    return math.fsum(entropies) / len(entropies)


def record_score(
    record: GenerationRecord, method: MethodKind, diag: ScoreDiagnostics | None = None
) -> float:
    """Per-record value of one of the eight probability-based methods.

    Note on naming: NLL_MIN follows the least likely token, so numerically
    it is the maximum NLL over the sequence.
    """
    if method is MethodKind.NLL_F:
        return token_nll(record, TokenPosition.FIRST, diag)
    if method is MethodKind.NLL_P:
        return token_nll(record, TokenPosition.PENULTIMATE, diag)
    if method is MethodKind.NLL_MIN:
        return sequence_nll(record, SeqAggregation.WORST_TOKEN)
    if method is MethodKind.NLL_AVG:
        return sequence_nll(record, SeqAggregation.MEAN)
    if method is MethodKind.ENT_F:
        return token_entropy(record, TokenPosition.FIRST, diag)
    if method is MethodKind.ENT_P:
        return token_entropy(record, TokenPosition.PENULTIMATE, diag)
    if method is MethodKind.ENT_MAX:
        return sequence_entropy(record, SeqAggregation.WORST_TOKEN, diag)
    if method is MethodKind.ENT_AVG:
        return sequence_entropy(record, SeqAggregation.MEAN, diag)
    raise ValueError(f"{method.value} is not a probability-based uncertainty method")


def dataset_score(
    records: Sequence[GenerationRecord],
    method: MethodKind,
    diag: ScoreDiagnostics | None = None,
) -> float:
    """Unweighted mean of the per-record score over one (model, dataset) cell.

    fsum makes the reduction exactly rounded, hence permutation invariant.
    """
    if method not in UNCERTAINTY_METHODS:
        raise ValueError(f"{method.value} is not a probability-based uncertainty method")
    if not records:
        raise DegenerateInputError("dataset_score requires a non-empty record list")
    cell = records[0].key[:2]
    for record in records:
        if record.key[:2] != cell:
            raise DegenerateInputError(
                f"records mix cells {cell} and {record.key[:2]}; score one cell at a time"
            )
    return math.fsum(record_score(r, method, diag) for r in records) / len(records)
