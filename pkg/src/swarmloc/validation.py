"""Input validation helpers used by the estimator classes and core ops."""

from __future__ import annotations

import math

import numpy as np


def require_finite_scalar(name: str, value) -> float:
    """Coerce to float and reject NaN/inf."""
    try:
        value = float(value)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"{name} must be a number, got {value!r}") from exc
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return value


def require_positive(name: str, value) -> float:
    value = require_finite_scalar(name, value)
    if value <= 0.0:
        raise ValueError(f"{name} must be positive, got {value!r}")
    return value


def require_non_negative(name: str, value) -> float:
    value = require_finite_scalar(name, value)
    if value < 0.0:
        raise ValueError(f"{name} must be non-negative, got {value!r}")
    return value


def as_float_array(name: str, values, shape=None, min_rows=None) -> np.ndarray:
    """Convert to a float ndarray, checking finiteness and optionally shape.

    ``shape`` entries of ``None`` act as wildcards, e.g. ``(None, 2)``
    accepts any number of rows with exactly two columns.
    """
    arr = np.asarray(values, dtype=float)
    if shape is not None:
        if arr.ndim != len(shape) or any(
            want is not None and have != want for have, want in zip(arr.shape, shape)
        ):
            want_str = tuple("n" if s is None else s for s in shape)
            raise ValueError(f"{name} must have shape {want_str}, got {arr.shape}")
    if min_rows is not None and arr.shape[0] < min_rows:
        raise ValueError(f"{name} needs at least {min_rows} rows, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must contain only finite values")
    return arr


def require_covariance(name: str, matrix, size: int = 3, sym_tol: float = 1e-9,
                       eig_floor: float = -1e-12) -> np.ndarray:
    """Validate a square covariance: finite, symmetric within ``sym_tol``,
    eigenvalues no smaller than ``eig_floor``.  Returns a float copy."""
    cov = np.array(matrix, dtype=float)
    if cov.shape != (size, size):
        raise ValueError(f"{name} must have shape ({size}, {size}), got {cov.shape}")
    if not np.all(np.isfinite(cov)):
        raise ValueError(f"{name} must be finite")
    asym = float(np.max(np.abs(cov - cov.T)))
    if asym > sym_tol:
        raise ValueError(f"{name} must be symmetric within {sym_tol:g}, worst {asym:.3e}")
    min_eig = float(np.min(np.linalg.eigvalsh(cov)))
    if min_eig < eig_floor:
        raise ValueError(
            f"{name} must be positive semidefinite (eigenvalue floor {eig_floor:g}), "
            f"min eigenvalue {min_eig:.3e}"
        )
    return cov
