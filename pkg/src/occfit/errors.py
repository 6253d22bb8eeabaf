"""Exception types shared across the package.

The CLI maps these onto exit codes: usage/config problems exit with 2,
runtime failures with 1.
"""


class OccfitError(Exception):
    """Base class for all package errors."""


class ConfigError(OccfitError):
    """Invalid configuration: bad value, unknown key, or shape mismatch."""


class ParseError(OccfitError):
    """Malformed input file. Carries the offending line number when known."""

    def __init__(self, message, path=None, line=None):
        self.message = message
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix += str(path)
        if line is not None:
            prefix += f":{line}"
        if prefix:
            message = f"{prefix}: {message}"
        super().__init__(message)


class DegenerateInputError(OccfitError):
    """Input data that cannot support the requested operation (e.g. all
    points identical, zero-area mesh)."""


class DegenerateGradientError(OccfitError):
    """Margin gradient norm below the guard threshold at a query point."""


class NumericError(OccfitError):
    """Non-finite value encountered. Carries the training iteration when
    raised from inside the optimization loop."""

    def __init__(self, message, iteration=None):
        self.iteration = iteration
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)


class TrainingStallError(OccfitError):
    """Every pair in a batch hit the degenerate-gradient guard."""


class CheckpointFormatError(OccfitError):
    """Checkpoint file is truncated, has a bad magic string, or an
    inconsistent header."""
