"""Exceptions and input checks shared across the package."""

import numpy as np

__all__ = [
    "SpikeError",
    "InvalidDataError",
    "NumericError",
    "DegenerateSpikeError",
    "ConfigurationError",
    "IngestionError",
    "check_sample",
    "check_vector",
]


class SpikeError(Exception):
    """Base class for all errors raised by this package."""


class InvalidDataError(SpikeError, ValueError):
    """Input arrays have the wrong shape or contain non-finite values."""


class NumericError(SpikeError, ArithmeticError):
    """A numerical kernel failed (e.g. the eigensolver did not converge)."""


class DegenerateSpikeError(NumericError):
    """A noise-reduced eigenvalue is zero, so its direction is undefined.

    Attributes
    ----------
    component : int
        Zero-based index of the first degenerate component. Every component
        before it is well defined, so callers can retry with ``k = component``.
    """

    def __init__(self, component, message=None):
        self.component = int(component)
        super().__init__(
            message
            or f"noise-reduced eigenvalue of component {component} is degenerate; "
            f"reduce k to {component}"
        )


class ConfigurationError(SpikeError, ValueError):
    """Parameters are inconsistent with each other or with the data."""


class IngestionError(SpikeError, ValueError):
    """A data file could not be parsed into a dataset."""


def check_sample(X, min_n=2, name="sample"):
    """Validate a p x n feature-by-sample matrix and return it as float64.

    Columns are observations. The array is not copied when it is already a
    float64 ndarray.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise InvalidDataError(f"{name} must be 2-D (features x samples), got ndim={X.ndim}")
    p, n = X.shape
    if p < 1:
        raise InvalidDataError(f"{name} has no features")
    if n < min_n:
        raise InvalidDataError(f"{name} needs at least {min_n} samples, got {n}")
    if not np.all(np.isfinite(X)):
        bad = np.argwhere(~np.isfinite(X))[0]
        raise InvalidDataError(
            f"{name} contains a non-finite value at feature {bad[0]}, sample {bad[1]}"
        )
    return X


def check_vector(x, p, name="x0"):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != p:
        raise InvalidDataError(f"{name} must be a vector of length {p}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidDataError(f"{name} contains non-finite values")
    return x
