#!/usr/bin/env python3
"""Regenerate the end-to-end golden fixture under tests/data.

Produces two simulated dataset logs (one VQA, one MCVQ), deterministic
text-derived consistency embeddings, per-dataset feature clouds for the
Frechet analysis, an option map for the MCVQ dataset, the run config, and
the expected pipeline outputs. Everything is a pure function of the seeds
below, so reruns are byte-identical.
"""
from __future__ import annotations

import hashlib
import json
import shutil
import sys
from pathlib import Path

import numpy as np

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from uqrank.consistency import expand_answer, orig_embedding_id, resample_embedding_id
from uqrank.core import EmbeddingSet, TaskKind
from uqrank.pipeline import RunConfig, run_pipeline
from uqrank.synth import EnsembleConfig, write_ensemble

DATA = REPO / "tests" / "data"
EMB_DIM = 16

VQA_CFG = EnsembleConfig(
    n_models=5, n_samples=200, task_kind=TaskKind.VQA, accuracy_range=(0.25, 0.85),
    calibration_noise=0.1, vocab_sizes=(32000, 257000), resamples_per_record=5,
    temperature=0.7, seed=101, dataset_id="dvqa",
)
MCVQ_CFG = EnsembleConfig(
    n_models=5, n_samples=200, task_kind=TaskKind.MCVQ, accuracy_range=(0.3, 0.9),
    calibration_noise=0.1, vocab_sizes=(32000,), resamples_per_record=5,
    temperature=0.7, seed=202, dataset_id="dmcvq",
)

GOLDEN_CONFIG = """\
# End-to-end fixture: two simulated datasets, every method requested.
logs = ["logs/fixture_vqa.jsonl", "logs/fixture_mcvq.jsonl"]
methods = "all"
out_dir = "out"
proxy_dataset_id = "dvqa"
subset_n = 50
subset_seed = 7
subset_draws = 1

[consistency_embeddings]
dvqa = "embeddings/cons_vqa"
dmcvq = "embeddings/cons_mcvq"

[expanded_embeddings]
dvqa = "embeddings/cons_vqa"
dmcvq = "embeddings/cons_mcvq_expanded"

[fd_embeddings]
dvqa = "embeddings/fd_vqa"
dmcvq = "embeddings/fd_mcvq"

[option_maps]
dmcvq = "options_mcvq.json"
"""


def text_vector(text: str) -> np.ndarray:
    """Deterministic unit vector derived from the text content alone."""
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    seed = int.from_bytes(digest[:8], "little")
    v = np.random.Generator(np.random.PCG64(seed)).standard_normal(EMB_DIM)
    return (v / np.linalg.norm(v)).astype(np.float32)


def option_map_for(records) -> dict:
    options = {}
    for record in records:
        options.setdefault(
            record.sample_id,
            {
                "A": f"option alpha {record.sample_id}",
                "B": f"option beta {record.sample_id}",
                "C": f"option gamma {record.sample_id}",
                "D": f"option delta {record.sample_id}",
            },
        )
    return options


def consistency_embeddings(records, expander=None) -> EmbeddingSet:
    rows = {}
    for record in records:
        texts = [(orig_embedding_id(record.model_id, record.sample_id), record.output_text)]
        texts += [
            (resample_embedding_id(record.model_id, record.sample_id, i), r.output_text)
            for i, r in enumerate(record.resamples)
        ]
        for id_, text in texts:
            if expander is not None:
                text = expander(record.sample_id, text)
            rows[id_] = text_vector(text)
    return EmbeddingSet.from_rows(sorted(rows.items()))


def feature_cloud(seed: int, center: float) -> EmbeddingSet:
    rng = np.random.Generator(np.random.PCG64(seed))
    vectors = rng.normal(loc=center, scale=1.0, size=(300, EMB_DIM)).astype(np.float32)
    return EmbeddingSet.from_rows((f"p{i:04d}", vectors[i]) for i in range(300))


def main() -> None:
    (DATA / "logs").mkdir(parents=True, exist_ok=True)
    (DATA / "embeddings").mkdir(parents=True, exist_ok=True)

    vqa = write_ensemble(VQA_CFG, DATA / "logs" / "fixture_vqa.jsonl")
    mcvq = write_ensemble(MCVQ_CFG, DATA / "logs" / "fixture_mcvq.jsonl")

    options = option_map_for(mcvq.records)
    (DATA / "options_mcvq.json").write_text(
        json.dumps(options, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    consistency_embeddings(vqa.records).save(DATA / "embeddings" / "cons_vqa")
    consistency_embeddings(mcvq.records).save(DATA / "embeddings" / "cons_mcvq")
    consistency_embeddings(
        mcvq.records, expander=lambda sid, text: expand_answer(text, options[sid])
    ).save(DATA / "embeddings" / "cons_mcvq_expanded")

    feature_cloud(11, center=0.0).save(DATA / "embeddings" / "fd_vqa")
    feature_cloud(12, center=0.8).save(DATA / "embeddings" / "fd_mcvq")

    (DATA / "golden_config.toml").write_text(GOLDEN_CONFIG, encoding="utf-8")

    golden_dir = DATA / "golden"
    if golden_dir.exists():
        shutil.rmtree(golden_dir)
    cfg = RunConfig.from_file(DATA / "golden_config.toml", out_dir_override=str(golden_dir))
    result = run_pipeline(cfg)
    if result.exit_code != 0:
        raise SystemExit(f"golden pipeline run failed: {result.errors}")
    print(f"fixture regenerated; golden artifacts: {', '.join(result.artifacts)}")
    for warning in result.warnings:
        print(f"  note: {warning}")


if __name__ == "__main__":
    main()
