import math

import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from uqrank.core import GenerationRecord, MethodKind, TaskKind, TokenEvent
from uqrank.errors import DegenerateInputError, MissingEntropyError
from uqrank.uncertainty import (
    LOGPROB_FLOOR,
    ScoreDiagnostics,
    SeqAggregation,
    TokenPosition,
    dataset_score,
    entropy_from_topk,
    perplexity,
    sequence_entropy,
    sequence_nll,
    token_entropy,
    token_nll,
)
from strategies import generation_records


def rec_from_probs(*probs, entropies=None, vocab=4):
    entropies = entropies or [None] * len(probs)
    tokens = tuple(
        TokenEvent(token_text=f"t{i}", logprob=math.log(p), entropy_norm=h)
        for i, (p, h) in enumerate(zip(probs, entropies))
    )
    return GenerationRecord(
        model_id="m", dataset_id="d", sample_id="s", task_kind=TaskKind.VQA,
        output_text="x", tokens=tokens, vocab_size=vocab,
    )


def test_token_nll_positions():
    record = rec_from_probs(0.5, 0.25)
    assert token_nll(record, TokenPosition.FIRST) == pytest.approx(0.6931, abs=1e-4)
    assert token_nll(record, TokenPosition.PENULTIMATE) == pytest.approx(1.3863, abs=1e-4)


def test_token_nll_single_token_falls_back_and_counts():
    record = rec_from_probs(1.0)
    diag = ScoreDiagnostics()
    assert token_nll(record, TokenPosition.FIRST, diag) == 0.0
    assert token_nll(record, TokenPosition.PENULTIMATE, diag) == 0.0
    assert diag.j1_fallbacks == 1


def test_sequence_nll_examples():
    record = rec_from_probs(0.5, 0.25)
    assert sequence_nll(record, SeqAggregation.WORST_TOKEN) == pytest.approx(1.3863, abs=1e-4)
    assert sequence_nll(record, SeqAggregation.MEAN) == pytest.approx(1.0397, abs=1e-4)
    sure = rec_from_probs(1.0, 1.0, 1.0)
    assert sequence_nll(sure, SeqAggregation.WORST_TOKEN) == 0.0
    assert sequence_nll(sure, SeqAggregation.MEAN) == 0.0


def test_perplexity_examples():
    assert perplexity(rec_from_probs(0.5, 0.25)) == pytest.approx(2.8284, abs=1e-4)
    assert perplexity(rec_from_probs(1.0)) == 1.0
    assert perplexity(rec_from_probs(math.exp(-1.0))) == pytest.approx(math.e, abs=1e-12)


def test_infinite_logprob_clamps_to_floor():
    record = GenerationRecord(
        model_id="m", dataset_id="d", sample_id="s", task_kind=TaskKind.VQA,
        output_text="x", tokens=(TokenEvent("t", float("-inf")),), vocab_size=4,
    )
    assert sequence_nll(record, SeqAggregation.WORST_TOKEN) == -LOGPROB_FLOOR
    assert math.isfinite(perplexity(record))


def test_entropy_from_topk_examples():
    assert entropy_from_topk([("a", math.log(0.5)), ("b", math.log(0.25))], 4) == pytest.approx(
        0.75, abs=1e-12
    )
    assert entropy_from_topk([("a", 0.0)], 1000) == 0.0
    uniform = [(f"t{i}", math.log(0.25)) for i in range(4)]
    assert entropy_from_topk(uniform, 4) == pytest.approx(1.0, abs=1e-12)


def test_entropy_from_topk_rejects_excess_mass():
    with pytest.raises(DegenerateInputError):
        entropy_from_topk([("a", -1e-9), ("b", -1e-9)], 4)


def test_token_entropy_prefers_logged_value():
    record = rec_from_probs(0.5, entropies=[0.37])
    assert token_entropy(record, TokenPosition.FIRST) == 0.37
    zero = rec_from_probs(0.5, entropies=[0.0])
    assert token_entropy(zero, TokenPosition.FIRST) == 0.0


def test_token_entropy_falls_back_to_topk_and_counts():
    ev = TokenEvent("t", math.log(0.5), top_logprobs=(("a", math.log(0.5)), ("b", math.log(0.25))))
    record = GenerationRecord(
        model_id="m", dataset_id="d", sample_id="s", task_kind=TaskKind.VQA,
        output_text="x", tokens=(ev,), vocab_size=4,
    )
    diag = ScoreDiagnostics()
    assert token_entropy(record, TokenPosition.FIRST, diag) == pytest.approx(0.75, abs=1e-12)
    assert diag.entropy_fallback_tokens == 1 and diag.entropy_tokens == 1


def test_token_entropy_missing_both_fields_errors():
    record = rec_from_probs(0.5)
    with pytest.raises(MissingEntropyError, match="first"):
        token_entropy(record, TokenPosition.FIRST)
    with pytest.raises(MissingEntropyError):
        sequence_entropy(record, SeqAggregation.MEAN)


def test_sequence_entropy_examples():
    record = rec_from_probs(0.5, 0.5, entropies=[0.2, 0.8])
    assert sequence_entropy(record, SeqAggregation.WORST_TOKEN) == 0.8
    assert sequence_entropy(record, SeqAggregation.MEAN) == pytest.approx(0.5)
    flat = rec_from_probs(0.5, 0.5, entropies=[0.0, 0.0])
    assert sequence_entropy(flat, SeqAggregation.WORST_TOKEN) == 0.0
    assert sequence_entropy(flat, SeqAggregation.MEAN) == 0.0


def test_dataset_score_examples():
    r1 = rec_from_probs(math.exp(-1.0))
    r2 = rec_from_probs(math.exp(-3.0))
    assert dataset_score([r1], MethodKind.NLL_AVG) == pytest.approx(1.0)
    assert dataset_score([r1, r2], MethodKind.NLL_AVG) == pytest.approx(2.0)
    assert dataset_score([r1] * 7, MethodKind.NLL_AVG) == dataset_score([r1], MethodKind.NLL_AVG)


def test_dataset_score_rejects_empty_and_mixed_cells():
    r1 = rec_from_probs(0.5)
    other = GenerationRecord(
        model_id="m2", dataset_id="d", sample_id="s", task_kind=TaskKind.VQA,
        output_text="x", tokens=(TokenEvent("t", -0.1),), vocab_size=4,
    )
    with pytest.raises(DegenerateInputError):
        dataset_score([], MethodKind.NLL_AVG)
    with pytest.raises(DegenerateInputError):
        dataset_score([r1, other], MethodKind.NLL_AVG)
    with pytest.raises(ValueError):
        dataset_score([r1], MethodKind.SAMPLE_BLEU)


# --- properties -------------------------------------------------------------

@given(generation_records())
@settings(max_examples=200)
def test_worst_token_nll_dominates_mean(record):
    worst = sequence_nll(record, SeqAggregation.WORST_TOKEN)
    mean = sequence_nll(record, SeqAggregation.MEAN)
    assert worst >= mean >= 0.0
    nlls = [-max(ev.logprob, LOGPROB_FLOOR) for ev in record.tokens]
    if max(nlls) - min(nlls) > 1e-9:
        assert worst > mean


@given(generation_records())
@settings(max_examples=100)
def test_perplexity_is_exactly_exp_of_mean_nll(record):
    assert perplexity(record) == math.exp(sequence_nll(record, SeqAggregation.MEAN))


@given(generation_records(with_entropy=True))
@settings(max_examples=100)
def test_sequence_entropy_stays_in_unit_interval(record):
    for agg in SeqAggregation:
        assert 0.0 <= sequence_entropy(record, agg) <= 1.0


@given(st.integers(2, 16), st.integers(0, 2**32 - 1))
@settings(max_examples=200)
def test_topk_entropy_matches_direct_formula_on_full_support(vocab, seed):
    # When the top-k list covers the whole vocabulary the remainder bucket
    # vanishes and the estimator must equal the exact normalized entropy.
    import numpy as np

    rng = np.random.default_rng(seed)
    weights = rng.random(vocab) + 1e-9
    probs = sorted((weights / weights.sum()).tolist(), reverse=True)
    pairs = [(f"t{i}", math.log(p)) for i, p in enumerate(probs)]
    direct = -math.fsum(p * math.log(p) for p in probs) / math.log(vocab)
    assert entropy_from_topk(pairs, vocab) == pytest.approx(direct, abs=1e-10)


@given(generation_records(), st.integers(0, 1000))
@settings(max_examples=60)
def test_dataset_score_is_permutation_invariant(record, seed):
    import random

    base = GenerationRecord(
        model_id=record.model_id, dataset_id=record.dataset_id, sample_id=record.sample_id,
        task_kind=record.task_kind, output_text=record.output_text, tokens=record.tokens,
        vocab_size=record.vocab_size,
    )
    clones = [
        GenerationRecord(
            model_id=base.model_id, dataset_id=base.dataset_id, sample_id=f"s{i}",
            task_kind=base.task_kind, output_text=base.output_text,
            tokens=rec_from_probs(0.5 / (i + 1)).tokens, vocab_size=base.vocab_size,
        )
        for i in range(6)
    ]
    shuffled = clones[:]
    random.Random(seed).shuffle(shuffled)
    assert dataset_score(clones, MethodKind.NLL_AVG) == dataset_score(shuffled, MethodKind.NLL_AVG)


@given(generation_records(min_tokens=1, max_tokens=1))
@settings(max_examples=50)
def test_first_equals_penultimate_for_single_token(record):
    assert token_nll(record, TokenPosition.FIRST) == token_nll(record, TokenPosition.PENULTIMATE)
