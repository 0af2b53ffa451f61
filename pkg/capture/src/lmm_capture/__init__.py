"""Capture adapter: runs small open models through transformers and logs
per-token chosen log-probabilities plus exact normalized entropies in the
neutral JSONL schema the scoring engine consumes, and extracts text/image
embeddings into the engine's file-pair format."""

__version__ = "0.1.0"
