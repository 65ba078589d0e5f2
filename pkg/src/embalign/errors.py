"""Error taxonomy shared across the package.

Each class carries the process exit code the CLI maps it to.
"""


class EmbalignError(Exception):
    """Base class for errors raised by this package."""

    exit_code = 1


class ConfigError(EmbalignError):
    """Invalid or inconsistent experiment configuration."""

    exit_code = 2


class DataFormatError(EmbalignError):
    """Malformed input file (embedding, pair, label, model, report corpus)."""

    exit_code = 3


class NumericalError(EmbalignError):
    """Numerical failure: divergence, non-convergence, NaN loss."""

    exit_code = 4

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
