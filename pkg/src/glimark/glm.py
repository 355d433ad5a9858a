"""Exponential-family pieces for canonical-link GLMs.

The dispersion parameter is fixed at one throughout, so the Gaussian
negative log-likelihood is squared loss up to affine constants. The
data-only normaliser ``c(y)`` never enters the optimisation and is not
implemented.
"""

from __future__ import annotations

import enum
import warnings

import numpy as np
from scipy.special import expit

from .errors import DataError

# Boundary clamp for the mean when initialising the intercept.
MEAN_EPS = 1e-6


class BoundaryMeanWarning(RuntimeWarning):
    """A mean on the boundary of its domain was clamped before linking."""


class Family(str, enum.Enum):
    BINOMIAL = "binomial"
    POISSON = "poisson"
    GAUSSIAN = "gaussian"

    @classmethod
    def parse(cls, value: "Family | str") -> "Family":
        if isinstance(value, Family):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise DataError(f"unknown family {value!r}; expected one of "
                            f"{[f.value for f in cls]}") from None


def _finite(f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if not np.all(np.isfinite(f)):
        raise DataError("linear predictor contains non-finite values")
    return f


def b_value(family: Family | str, f):
    """Cumulant function ``b(f)``, evaluated element-wise.

    The binomial branch is the softplus ``log(1 + exp(f))`` written so that
    large positive ``f`` does not overflow.
    """
    family = Family.parse(family)
    f = _finite(f)
    if family is Family.BINOMIAL:
        big = f > 30.0
        safe = np.where(big, 0.0, f)
        out = np.where(big, f + np.log1p(np.exp(-np.abs(f))), np.log1p(np.exp(safe)))
    elif family is Family.POISSON:
        with np.errstate(over="ignore"):
            out = np.exp(f)
    else:
        out = 0.5 * f * f
    return out[()] if out.ndim == 0 else out


def mean(family: Family | str, f):
    """Inverse canonical link, i.e. ``db/df``."""
    family = Family.parse(family)
    f = _finite(f)
    if family is Family.BINOMIAL:
        out = expit(f)
    elif family is Family.POISSON:
        with np.errstate(over="ignore"):
            out = np.exp(f)
    else:
        out = f.copy()
    return out[()] if np.ndim(out) == 0 else out


def clamp_mean(family: Family | str, mu: float) -> float:
    """Pull a boundary mean into the open domain, warning when it moves."""
    family = Family.parse(family)
    mu = float(mu)
    if family is Family.BINOMIAL:
        clamped = min(max(mu, MEAN_EPS), 1.0 - MEAN_EPS)
    elif family is Family.POISSON:
        clamped = max(mu, MEAN_EPS)
    else:
        clamped = mu
    if clamped != mu:
        warnings.warn(f"{family.value} mean {mu!r} is on the domain boundary; "
                      f"clamped to {clamped!r}", BoundaryMeanWarning, stacklevel=3)
    return clamped


def link(family: Family | str, mu: float) -> float:
    """Canonical link ``g(mu)``; boundary means are clamped with a warning."""
    family = Family.parse(family)
    mu = float(mu)
    if not np.isfinite(mu):
        raise DataError(f"mean {mu!r} is not finite")
    if family is Family.BINOMIAL:
        if mu < 0.0 or mu > 1.0:
            raise DataError(f"binomial mean {mu!r} outside [0, 1]")
        mu = clamp_mean(family, mu)
        return float(np.log(mu) - np.log1p(-mu))
    if family is Family.POISSON:
        if mu < 0.0:
            raise DataError(f"poisson mean {mu!r} is negative")
        return float(np.log(clamp_mean(family, mu)))
    return mu


def check_outcome(family: Family | str, y) -> np.ndarray:
    """Validate an outcome vector against its family and return it as floats."""
    family = Family.parse(family)
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise DataError("outcome must be one-dimensional")
    if not np.all(np.isfinite(y)):
        raise DataError("outcome contains non-finite values")
    if family is Family.BINOMIAL and not np.all((y == 0.0) | (y == 1.0)):
        raise DataError("binomial outcome must be coded 0/1")
    if family is Family.POISSON and not np.all((y >= 0.0) & (y == np.floor(y))):
        raise DataError("poisson outcome must be nonnegative integers")
    return y


def _pair(family, y, f):
    family = Family.parse(family)
    y = check_outcome(family, y)
    f = _finite(np.atleast_1d(f))
    if y.shape != f.shape:
        raise DataError(f"outcome length {y.shape[0]} != predictor length {f.shape[0]}")
    return family, y, f


def nll(family: Family | str, y, f) -> float:
    """Average negative log-likelihood ``-(1/N) sum(y f - b(f))``."""
    family, y, f = _pair(family, y, f)
    return float(-np.mean(y * f - b_value(family, f)))


def b_and_mean(family: Family, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unchecked ``(b(f), mean(f))`` for optimiser inner loops."""
    if family is Family.BINOMIAL:
        return np.logaddexp(0.0, f), expit(f)
    if family is Family.POISSON:
        with np.errstate(over="ignore"):
            e = np.exp(f)
        return e, e
    return 0.5 * f * f, f


def residuals(family: Family | str, y, f) -> np.ndarray:
    """Response residuals ``y - mean(f)``.

    The loss gradient with respect to a coefficient multiplying column
    ``K[:, j]`` is ``-(1/N) * residuals @ K[:, j]``.
    """
    family, y, f = _pair(family, y, f)
    return y - np.atleast_1d(mean(family, f))
