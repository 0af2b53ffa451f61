"""Adapter conformance gate: greedy capture over 20 prompts validates
cleanly against the engine, logged logprob sums match the framework's own
sequence scores, and embed output round-trips through the engine loader."""
import json
import math
import subprocess

import pytest
import torch
from transformers import AutoModelForCausalLM, AutoTokenizer

from lmm_capture.cli import embed_main
from lmm_capture.runner import CaptureJob, capture_run


def test_capture_conformance(tiny_causal_model, prompts_file, tmp_path):
    out = tmp_path / "log.jsonl"
    job = CaptureJob(
        model_ref=tiny_causal_model, data_path=prompts_file, out_path=str(out),
        model_id="tiny", dataset_id="dcap", max_new_tokens=8,
    )
    written = capture_run(job)
    assert written > 0

    proc = subprocess.run(["uqrank", "validate", str(out)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stdout + proc.stderr
    assert "errors=0" in proc.stdout

    tokenizer = AutoTokenizer.from_pretrained(tiny_causal_model)
    model = AutoModelForCausalLM.from_pretrained(tiny_causal_model)
    model.eval()
    with open(out, "r", encoding="utf-8") as fh:
        records = [json.loads(line) for line in fh if line.strip()]
    for record in records:
        inputs = tokenizer(record["prompt"], return_tensors="pt")
        with torch.no_grad():
            result = model.generate(
                **inputs, max_new_tokens=8, do_sample=False,
                return_dict_in_generate=True, output_scores=True,
                pad_token_id=0, eos_token_id=0,
            )
        framework = model.compute_transition_scores(
            result.sequences, result.scores, normalize_logits=True
        )[0]
        logged = [t["logprob"] for t in record["tokens"]]
        assert math.fsum(logged) == pytest.approx(
            float(framework[: len(logged)].sum()), abs=1e-4
        )
    print(f"ACCEPTANCE PASS: capture conformance ({written}/20 prompts, validate clean, "
          "logprob sums within 1e-4)")


def test_embed_conformance(tiny_causal_model, tmp_path):
    texts = tmp_path / "texts.jsonl"
    with open(texts, "w", encoding="utf-8") as fh:
        for i in range(6):
            fh.write(json.dumps({"id": f"e{i}", "text": f"the cat sits {i}"}) + "\n")
    prefix = tmp_path / "emb"
    assert embed_main(
        ["--encoder", tiny_causal_model, "--texts", str(texts), "--out", str(prefix)]
    ) == 0

    from uqrank.core import EmbeddingSet

    loaded = EmbeddingSet.load(prefix)
    assert len(loaded) == 6 and loaded.dim == 32
    print("ACCEPTANCE PASS: embed output round-trips through the engine loader")
