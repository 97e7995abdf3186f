"""Custom exceptions for rae-xmc.

Every exception carries the CLI exit code it maps to, so the command-line
layer can translate failures without a lookup table.
"""


class RaeXmcError(Exception):
    """Base exception for rae-xmc."""

    exit_code = 1


class FormatError(RaeXmcError):
    """A file could not be parsed."""

    exit_code = 2


class InvariantViolation(RaeXmcError):
    """A structural invariant does not hold."""

    exit_code = 3


class DimensionMismatch(InvariantViolation):
    """Embedding dimensions or row counts disagree."""

    pass


class ZeroRow(InvariantViolation):
    """A row cannot be normalized because its norm is (numerically) zero."""

    def __init__(self, row_index: int):
        super().__init__(f"Row {row_index} has zero norm and cannot be normalized")
        self.row_index = row_index


class EmptyInput(InvariantViolation):
    """An operation received an empty input it cannot handle."""

    pass


class EmptyKeySet(InvariantViolation):
    """An index cannot be built over zero keys."""

    pass


class EmptyResults(InvariantViolation):
    """No retrieval results to summarize."""

    pass


class EmptyBatch(InvariantViolation):
    """A training batch has no instances."""

    pass


class DegenerateEncoding(InvariantViolation):
    """The encoder produced a zero vector before normalization."""

    pass


class ChecksumMismatch(InvariantViolation):
    """A file does not match the checksum recorded in a manifest."""

    pass


class ConfigurationError(RaeXmcError):
    """Configuration-related errors."""

    exit_code = 4


class InvalidLambda(ConfigurationError):
    """lambda outside [0, 1]."""

    pass


class InvalidTau(ConfigurationError):
    """Non-positive softmax temperature."""

    pass


class InvalidConfig(ConfigurationError):
    """Inconsistent hyperparameters."""

    pass


class BeyondQueue(ConfigurationError):
    """Requested more results than the search queue can hold."""

    pass
