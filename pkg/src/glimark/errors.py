"""Exception types shared across the package.

Each family of failure maps onto one CLI exit code so that callers can
tell configuration mistakes apart from bad data or numerical blow-ups.
"""

from __future__ import annotations


class GlimarkError(Exception):
    """Base class for all package errors."""

    exit_code = 1
    kind = "error"


class ConfigError(GlimarkError, ValueError):
    """Invalid configuration; ``key`` names the offending setting when known."""

    exit_code = 2
    kind = "config"

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class DataError(GlimarkError, ValueError):
    """Malformed, non-finite or family-incompatible data."""

    exit_code = 3
    kind = "data"


class InputError(DataError):
    """Bad arguments to a low-level numerical routine."""

    kind = "input"


class ModelError(GlimarkError, KeyError):
    """A model was queried for something it does not contain."""

    exit_code = 3
    kind = "model"

    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class MetricError(DataError):
    """A metric is undefined for the supplied labels."""

    kind = "metric"


class FoldError(DataError):
    """Cross-validation folds cannot be formed as requested."""

    kind = "fold"


class DivergenceError(GlimarkError, ArithmeticError):
    """The inner optimizer produced a non-finite objective."""

    exit_code = 4
    kind = "divergence"

    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message)
        self.iteration = iteration


class ColumnsExhausted(GlimarkError):
    """Every candidate column has already been selected."""

    kind = "exhausted"
