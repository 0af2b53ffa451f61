"""Uncertainty-based unsupervised ranking of generative models.

The package scores models on unlabeled data from their inference logs
(token log-probabilities, entropies, stochastic resamples), evaluates those
proxy scores against ground truth with rank statistics, and ships a
deterministic simulator plus a CLI tying the pipeline together.
"""

from .core import (
    Direction,
    EmbeddingSet,
    GenerationRecord,
    MethodKind,
    PerformanceTable,
    ResampleEvent,
    ScoreTable,
    TaskKind,
    TokenEvent,
    method_direction,
)
from .errors import (
    ConfigError,
    ConstantInputError,
    DegenerateInputError,
    MissingEmbeddingError,
    MissingEntropyError,
    RuleError,
    UqrankError,
    ValidationFailure,
)

__version__ = "0.1.0"

__all__ = [
    "Direction",
    "EmbeddingSet",
    "GenerationRecord",
    "MethodKind",
    "PerformanceTable",
    "ResampleEvent",
    "ScoreTable",
    "TaskKind",
    "TokenEvent",
    "method_direction",
    "ConfigError",
    "ConstantInputError",
    "DegenerateInputError",
    "MissingEmbeddingError",
    "MissingEntropyError",
    "RuleError",
    "UqrankError",
    "ValidationFailure",
    "__version__",
]
