"""Session fixtures: tiny locally built models (no hub access needed).

The conformance target is format fidelity, not language quality, so a
randomly initialized small decoder and a small vision encoder are enough;
both are saved to disk and reloaded through the same Auto* entry points a
real checkpoint would use.
"""
import pytest
import torch
from tokenizers import Tokenizer
from tokenizers.models import WordLevel
from tokenizers.pre_tokenizers import Whitespace
from transformers import (
    GPT2Config,
    GPT2LMHeadModel,
    PreTrainedTokenizerFast,
    ViTConfig,
    ViTImageProcessor,
    ViTModel,
)

WORDS = [
    "<eos>", "<unk>", "the", "a", "an", "cat", "dog", "bird", "red", "blue",
    "green", "big", "small", "on", "in", "under", "table", "chair", "box",
    "sits", "runs", "sleeps", "is", "are", "what", "where", "color", "animal",
    "yes", "no", "one", "two", "three", "left", "right", "above", "below",
    "near", "fast", "slow", "old", "new", "open", "closed", "answer", "question",
    "it", "this",
]


@pytest.fixture(scope="session")
def tiny_causal_model(tmp_path_factory):
    path = tmp_path_factory.mktemp("tiny-causal")
    vocab = {w: i for i, w in enumerate(WORDS)}
    backend = Tokenizer(WordLevel(vocab, unk_token="<unk>"))
    backend.pre_tokenizer = Whitespace()
    tokenizer = PreTrainedTokenizerFast(
        tokenizer_object=backend, eos_token="<eos>", unk_token="<unk>", pad_token="<eos>"
    )
    tokenizer.save_pretrained(path)
    torch.manual_seed(1234)
    config = GPT2Config(
        vocab_size=len(vocab), n_positions=64, n_embd=32, n_layer=2, n_head=2,
        bos_token_id=0, eos_token_id=0, pad_token_id=0,
    )
    GPT2LMHeadModel(config).save_pretrained(path)
    return str(path)


@pytest.fixture(scope="session")
def tiny_vision_encoder(tmp_path_factory):
    path = tmp_path_factory.mktemp("tiny-vit")
    torch.manual_seed(99)
    config = ViTConfig(
        image_size=32, patch_size=16, num_channels=3, hidden_size=24,
        num_hidden_layers=2, num_attention_heads=2, intermediate_size=48,
    )
    ViTModel(config).save_pretrained(path)
    ViTImageProcessor(size={"height": 32, "width": 32}).save_pretrained(path)
    return str(path)


@pytest.fixture(scope="session")
def prompts_file(tmp_path_factory):
    import json

    path = tmp_path_factory.mktemp("prompts") / "prompts.jsonl"
    stems = [
        "what color is the cat", "where is the dog", "the bird sits on the",
        "a big box is under the", "is the chair red",
    ]
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(20):
            fh.write(
                json.dumps(
                    {
                        "sample_id": f"p{i:03d}",
                        "prompt": f"{stems[i % len(stems)]} {WORDS[2 + i % 40]}",
                        "gold_answer": "yes" if i % 2 == 0 else "no",
                        "dataset_id": "dcap",
                    }
                )
                + "\n"
            )
    return str(path)
