"""
Exception hierarchy for sparse-data-diffusion.

Every error carries the process exit code the CLI reports for it:
2 for usage and format problems, 3 for numerical failures.
"""


class SddError(Exception):
    """Base class for all library errors."""

    exit_code = 2


class ShapeError(SddError):
    """Operands have non-conformable shapes."""


class RangeError(SddError):
    """A value lies outside an admissible range (scale source range, uniform bounds)."""


class DomainError(SddError):
    """A diffusion time lies outside [0, 1]."""


class LabelError(SddError):
    """Sparsity-bit targets are not in {-1, +1}."""


class StateError(SddError):
    """An operation was called without the state it depends on."""


class SpecError(SddError):
    """A synthetic data specification is inconsistent."""


class ArgumentError(SddError):
    """An argument violates an operation's precondition."""


class CorrelationError(ArgumentError):
    """A correlation is undefined because an input has zero variance."""


class ConfigError(SddError):
    """A configuration file cannot be read or fails validation."""


class FormatError(SddError):
    """A file does not follow its declared format."""

    def __init__(self, message: str, offset: int | None = None, line: int | None = None):
        self.offset = offset
        self.line = line
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        elif line is not None:
            message = f"{message} (at line {line})"
        super().__init__(message)


class CheckpointVersionError(FormatError):
    """A checkpoint was written with a different format version."""


class DegenerateStepError(SddError):
    """A sampler step would divide by a vanishing noise level."""

    exit_code = 3


class DivergenceError(SddError):
    """Training produced a non-finite loss."""

    exit_code = 3

    def __init__(self, step: int, message: str = "non-finite loss"):
        self.step = step
        super().__init__(f"Training diverged at step {step}: {message}")
