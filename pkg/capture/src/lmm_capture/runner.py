"""Greedy + resampled inference with per-token probability capture.

Each generation step is scored from the full softmax, so the log carries
the chosen token's exact natural-log probability and the exact normalized
entropy (entropy over the step distribution divided by log vocab size).
The end-of-sequence token is excluded from the logged tokens. Top-20
logprobs per step are logged additionally for audit.
"""
from __future__ import annotations

import logging
import math
import zlib
from dataclasses import dataclass
from pathlib import Path

import torch
from transformers import AutoModelForCausalLM, AutoTokenizer

from .records import read_prompts, record_obj, write_jsonl_atomic

logger = logging.getLogger(__name__)

TOPK_LOGGED = 20


@dataclass(frozen=True)
class CaptureJob:
    model_ref: str
    data_path: str
    out_path: str
    model_id: str | None = None
    dataset_id: str = "capture"
    task_kind: str = "vqa"
    resamples: int = 0
    temperature: float = 0.7
    max_new_tokens: int = 32
    seed: int = 0
    device: str = "cpu"

    def __post_init__(self) -> None:
        if self.resamples < 0:
            raise ValueError("resamples must be >= 0")
        if self.resamples > 0 and self.temperature <= 0.0:
            raise ValueError("temperature must be > 0 when resampling")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")


def _step_scores(step_logits: torch.Tensor, chosen_id: int) -> tuple[float, float, list]:
    """Chosen-token logprob, normalized entropy, and top-k pairs for one step."""
    logprobs = torch.log_softmax(step_logits.to(torch.float64), dim=-1)
    probs = logprobs.exp()
    entropy = float(-(probs * logprobs).sum())
    vocab = step_logits.shape[-1]
    entropy_norm = min(max(entropy / math.log(vocab), 0.0), 1.0)
    top = torch.topk(logprobs, k=min(TOPK_LOGGED, vocab))
    top_pairs = list(zip(top.indices.tolist(), top.values.tolist()))
    return float(logprobs[chosen_id]), entropy_norm, top_pairs


class CaptureRunner:
    def __init__(self, job: CaptureJob):
        self.job = job
        self.tokenizer = AutoTokenizer.from_pretrained(job.model_ref)
        self.model = AutoModelForCausalLM.from_pretrained(job.model_ref)
        self.model.to(job.device)
        self.model.eval()
        self.eos_id = self.model.generation_config.eos_token_id
        if self.eos_id is None:
            self.eos_id = self.tokenizer.eos_token_id
        self.pad_id = self.tokenizer.pad_token_id
        if self.pad_id is None:
            self.pad_id = self.eos_id

    def _generate(self, prompt: str, sample: bool, seed: int | None = None):
        inputs = self.tokenizer(prompt, return_tensors="pt").to(self.job.device)
        if seed is not None:
            torch.manual_seed(seed)
        kwargs = dict(
            max_new_tokens=self.job.max_new_tokens,
            return_dict_in_generate=True,
            output_scores=True,
            pad_token_id=self.pad_id,
            eos_token_id=self.eos_id,
        )
        if sample:
            kwargs.update(do_sample=True, temperature=self.job.temperature, top_k=0, top_p=1.0)
        else:
            kwargs.update(do_sample=False)
        with torch.no_grad():
            out = self.model.generate(**inputs, **kwargs)
        prompt_len = inputs["input_ids"].shape[1]
        generated = out.sequences[0][prompt_len:].tolist()
        return generated, out.scores

    def _content_ids(self, generated: list[int]) -> list[int]:
        if generated and generated[-1] == self.eos_id:
            return generated[:-1]
        return generated

    def capture_one(self, entry: dict) -> dict | None:
        prompt = entry["prompt"]
        generated, scores = self._generate(prompt, sample=False)
        content = self._content_ids(generated)
        if not content:
            logger.warning("prompt %s generated no content tokens; skipped", entry["sample_id"])
            return None
        vocab_size = scores[0].shape[-1]
        tokens = []
        for position, token_id in enumerate(content):
            logprob, entropy_norm, top_pairs = _step_scores(scores[position][0], token_id)
            tokens.append(
                {
                    "token_text": self.tokenizer.decode([token_id]),
                    "logprob": logprob,
                    "entropy_norm": entropy_norm,
                    "top_logprobs": [
                        [self.tokenizer.decode([tid]), lp] for tid, lp in top_pairs
                    ],
                }
            )
        resamples = None
        if self.job.resamples > 0:
            resamples = []
            sample_tag = zlib.crc32(entry["sample_id"].encode("utf-8"))
            for i in range(self.job.resamples):
                # process-stable seed per (job, sample, resample index)
                seed = (self.job.seed * 100003 + sample_tag + i) % (2**31 - 1)
                resampled, _ = self._generate(prompt, sample=True, seed=seed)
                resamples.append(
                    {
                        "temperature": self.job.temperature,
                        "output_text": self.tokenizer.decode(
                            self._content_ids(resampled), skip_special_tokens=True
                        ),
                    }
                )
        return record_obj(
            model_id=self.job.model_id or Path(self.job.model_ref).name,
            dataset_id=entry.get("dataset_id", self.job.dataset_id),
            sample_id=entry["sample_id"],
            task_kind=entry.get("task_kind", self.job.task_kind),
            output_text=self.tokenizer.decode(content, skip_special_tokens=True),
            vocab_size=int(vocab_size),
            tokens=tokens,
            prompt=prompt,
            gold_answer=entry.get("gold_answer"),
            resamples=resamples,
        )


def capture_run(job: CaptureJob) -> int:
    """Run the model over every prompt and write the JSONL log; returns the
    number of records written (failed prompts are skipped and logged)."""
    runner = CaptureRunner(job)
    prompts = read_prompts(job.data_path)
    objs = []
    for entry in prompts:
        try:
            obj = runner.capture_one(entry)
        except Exception as exc:  # per-prompt isolation: one bad prompt never kills a run
            logger.warning("prompt %s failed: %s", entry.get("sample_id"), exc)
            continue
        if obj is not None:
            objs.append(obj)
    return write_jsonl_atomic(objs, job.out_path)
