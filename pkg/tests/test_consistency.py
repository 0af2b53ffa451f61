import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from uqrank.consistency import (
    ExpansionRule,
    SimilarityKind,
    bleu1,
    bleu_tokens,
    consistency_dataset_score,
    embed_cosine,
    expand_answer,
    orig_embedding_id,
    resample_embedding_id,
    self_consistency,
)
from uqrank.core import EmbeddingSet, GenerationRecord, ResampleEvent, TaskKind, TokenEvent
from uqrank.errors import DegenerateInputError, MissingEmbeddingError, RuleError


def bleu1_oracle(candidate, reference):
    """Operational re-derivation: consume reference tokens one by one."""
    cand = bleu_tokens(candidate)
    ref = bleu_tokens(reference)
    if not cand:
        return 1.0 if not ref else 0.0
    if not ref:
        return 0.0
    pool = list(ref)
    hits = 0
    for token in cand:
        if token in pool:
            pool.remove(token)
            hits += 1
    precision = hits / len(cand)
    bp = 1.0 if len(cand) >= len(ref) else math.exp(1.0 - len(ref) / len(cand))
    return bp * precision


def test_bleu1_hand_examples():
    assert bleu1("a b c", "a b c") == pytest.approx(1.0, abs=1e-4)
    assert bleu1("a b c", "a b d") == pytest.approx(0.6667, abs=1e-4)
    assert bleu1("a", "a b") == pytest.approx(0.3679, abs=1e-4)


def test_bleu1_empty_conventions():
    assert bleu1("", "") == 1.0
    assert bleu1("", "a") == 0.0
    assert bleu1("a", "") == 0.0
    assert bleu1("...", "!!") == 1.0  # punctuation-only strings tokenize empty


def test_bleu1_strips_ascii_punctuation_and_case():
    assert bleu1("A, b. C!", "a b c") == 1.0


@given(st.text(alphabet="ab ", max_size=12), st.text(alphabet="ab ", max_size=12))
@settings(max_examples=300)
def test_bleu1_matches_multiset_oracle(candidate, reference):
    assert bleu1(candidate, reference) == pytest.approx(
        bleu1_oracle(candidate, reference), abs=1e-12
    )


@given(st.text(alphabet="abcd ", min_size=1, max_size=20).filter(lambda t: t.strip()))
def test_bleu1_identity(text):
    assert bleu1(text, text) == 1.0


def test_embed_cosine_examples():
    v = np.array([1.0, 2.0, 3.0])
    assert embed_cosine(v, v) == pytest.approx(1.0)
    assert embed_cosine(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(0.0)
    assert embed_cosine(np.array([1.0, 0.0]), np.array([-1.0, 0.0])) == pytest.approx(-1.0)


def test_embed_cosine_rejects_zero_vector_and_dim_mismatch():
    with pytest.raises(DegenerateInputError):
        embed_cosine(np.zeros(3), np.ones(3))
    with pytest.raises(DegenerateInputError):
        embed_cosine(np.ones(3), np.ones(4))


def make_record(output, resample_texts, task=TaskKind.VQA, sample_id="s1"):
    return GenerationRecord(
        model_id="m", dataset_id="d", sample_id=sample_id, task_kind=task,
        output_text=output, tokens=(TokenEvent("t", -0.1),), vocab_size=10,
        resamples=tuple(ResampleEvent(0.7, t) for t in resample_texts),
    )


def test_self_consistency_bleu_examples():
    same = make_record("x y", ["x y"] * 5)
    assert self_consistency(same, SimilarityKind.BLEU1) == 1.0
    disjoint = make_record("x y", ["p q"] * 5)
    assert self_consistency(disjoint, SimilarityKind.BLEU1) == 0.0
    mixed = make_record("a b", ["a b", "a c"])
    assert self_consistency(mixed, SimilarityKind.BLEU1) == pytest.approx(0.75)


def test_self_consistency_requires_resamples():
    record = GenerationRecord(
        model_id="m", dataset_id="d", sample_id="s", task_kind=TaskKind.VQA,
        output_text="x", tokens=(TokenEvent("t", -0.1),), vocab_size=10,
    )
    with pytest.raises(DegenerateInputError):
        self_consistency(record, SimilarityKind.BLEU1)


@given(st.lists(st.text(alphabet="abc ", max_size=8), min_size=2, max_size=6), st.integers(0, 99))
def test_self_consistency_invariant_to_resample_order(texts, seed):
    record = make_record("a b c", texts)
    shuffled_texts = texts[:]
    random.Random(seed).shuffle(shuffled_texts)
    shuffled = make_record("a b c", shuffled_texts)
    assert self_consistency(record, SimilarityKind.BLEU1) == self_consistency(
        shuffled, SimilarityKind.BLEU1
    )


def embedding_set_for(model_id, sample_id, orig_vec, resample_vecs):
    rows = [(orig_embedding_id(model_id, sample_id), orig_vec)]
    rows += [
        (resample_embedding_id(model_id, sample_id, i), v)
        for i, v in enumerate(resample_vecs)
    ]
    return EmbeddingSet.from_rows(rows)


def test_self_consistency_cosine_and_negative_clamp():
    record = make_record("x", ["a", "b"], sample_id="s9")
    es = embedding_set_for(
        "m", "s9", np.array([1.0, 0.0]), [np.array([1.0, 0.0]), np.array([-1.0, 0.0])]
    )
    # cos = 1 and cos = -1 (clamped to 0) average to 0.5
    value = self_consistency(record, SimilarityKind.EMBED_COSINE, embeddings=es)
    assert value == pytest.approx(0.5)


def test_self_consistency_cosine_missing_rows():
    record = make_record("x", ["a", "b"], sample_id="s9")
    es = embedding_set_for("m", "s9", np.array([1.0, 0.0]), [np.array([1.0, 0.0])])
    with pytest.raises(MissingEmbeddingError, match="m::s9::1"):
        self_consistency(record, SimilarityKind.EMBED_COSINE, embeddings=es)
    with pytest.raises(MissingEmbeddingError):
        self_consistency(record, SimilarityKind.EMBED_COSINE, embeddings=None)


def test_expand_answer():
    options = {"A": "North America", "B": "Columbia"}
    assert expand_answer("A", options) == "A. North America"
    assert expand_answer("B.", options) == "B. Columbia"
    assert expand_answer("free text answer", options) == "free text answer"
    with pytest.raises(RuleError):
        expand_answer("C", options)


def test_self_consistency_expanded_answer_uses_option_text():
    record = make_record("A", ["A", "B"], task=TaskKind.MCVQ, sample_id="q1")
    options = {"q1": {"A": "north america", "B": "south america"}}
    raw = self_consistency(record, SimilarityKind.BLEU1)
    expanded = self_consistency(
        record, SimilarityKind.BLEU1, expansion=ExpansionRule.EXPANDED_ANSWER, options=options
    )
    # raw: "A" vs "B" share nothing -> (1 + 0)/2; expanded shares "america"
    assert raw == pytest.approx(0.5)
    assert expanded > raw


def test_self_consistency_expanded_answer_requires_option_map():
    record = make_record("A", ["A"], task=TaskKind.MCVQ, sample_id="q1")
    with pytest.raises(RuleError):
        self_consistency(record, SimilarityKind.BLEU1, expansion=ExpansionRule.EXPANDED_ANSWER)
    with pytest.raises(RuleError):
        self_consistency(
            record, SimilarityKind.BLEU1, expansion=ExpansionRule.EXPANDED_ANSWER,
            options={"q1": {"B": "other"}},
        )


def test_expanded_answer_ignores_vqa_records():
    record = make_record("free form", ["free form"], task=TaskKind.VQA)
    value = self_consistency(
        record, SimilarityKind.BLEU1, expansion=ExpansionRule.EXPANDED_ANSWER
    )
    assert value == 1.0


def test_consistency_dataset_score_mean_and_symmetry():
    r1 = make_record("a b c d e", ["a x y z w"], sample_id="s1")  # precision 1/5
    r2 = make_record("a b", ["a b"], sample_id="s2")
    one = consistency_dataset_score([r1], SimilarityKind.BLEU1)
    assert one == pytest.approx(0.2)
    both = consistency_dataset_score([r1, r2], SimilarityKind.BLEU1)
    assert both == pytest.approx(0.6)
    assert both == consistency_dataset_score([r2, r1], SimilarityKind.BLEU1)


def test_consistency_dataset_score_rejects_mixed_cells():
    r1 = make_record("a", ["a"], sample_id="s1")
    r2 = GenerationRecord(
        model_id="other", dataset_id="d", sample_id="s2", task_kind=TaskKind.VQA,
        output_text="a", tokens=(TokenEvent("t", -0.1),), vocab_size=10,
        resamples=(ResampleEvent(0.7, "a"),),
    )
    with pytest.raises(DegenerateInputError):
        consistency_dataset_score([r1, r2], SimilarityKind.BLEU1)
