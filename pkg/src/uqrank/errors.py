"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: validation failures exit 2, config
errors exit 3, and everything else below UqrankError exits 4.
"""


class UqrankError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(UqrankError):
    """A run configuration is malformed or references missing inputs."""


class ValidationFailure(UqrankError):
    """One or more input log lines violated the record schema."""


class RuleError(UqrankError):
    """A correctness rule could not be applied to a record."""


class MissingEntropyError(UqrankError):
    """A token has neither entropy_norm nor top_logprobs."""


class MissingEmbeddingError(UqrankError):
    """An embedding row required for a similarity lookup is absent."""


class ConstantInputError(UqrankError):
    """A rank statistic is undefined because one input vector is constant."""


class DegenerateInputError(UqrankError):
    """A numeric operation received input outside its defined domain."""
