"""Argument checking helpers shared across the package.

Every public entry point validates its inputs through these functions so
that error messages name the offending argument and the expected shape
instead of failing deep inside numpy.
"""

from __future__ import annotations

import numbers

import numpy as np

__all__ = [
    "check_array",
    "check_finite",
    "check_in_range",
    "check_positive",
    "check_same_shape",
    "check_unit_vector",
]


def check_array(x, name, *, shape=None, ndim=None, dtype=float):
    """Coerce ``x`` to an ndarray and verify its dimensions.

    Parameters
    ----------
    x : array_like
        Value to validate.
    name : str
        Argument name used in error messages.
    shape : tuple of (int or None), optional
        Required shape; ``None`` entries match any size.
    ndim : int, optional
        Required number of dimensions (ignored when ``shape`` is given).
    dtype : dtype, optional
        Target dtype, default float64. Pass ``None`` to keep the input dtype.

    Returns
    -------
    numpy.ndarray
    """
    arr = np.asarray(x, dtype=dtype)
    if shape is not None:
        if arr.ndim != len(shape):
            raise ValueError(
                f"{name} must have {len(shape)} dimensions, got {arr.ndim}"
            )
        for axis, want in enumerate(shape):
            if want is not None and arr.shape[axis] != want:
                raise ValueError(
                    f"{name} must have shape {_shape_str(shape)}, got {arr.shape}"
                )
    elif ndim is not None and arr.ndim != ndim:
        raise ValueError(f"{name} must have {ndim} dimensions, got {arr.ndim}")
    return arr


def check_finite(arr, name):
    """Raise ValueError if ``arr`` contains NaN or infinity."""
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_positive(x, name, *, strict=True):
    """Validate a positive (or non-negative) scalar and return it as float."""
    if not isinstance(x, numbers.Real):
        raise TypeError(f"{name} must be a real number, got {type(x).__name__}")
    x = float(x)
    if strict and not x > 0:
        raise ValueError(f"{name} must be > 0, got {x}")
    if not strict and not x >= 0:
        raise ValueError(f"{name} must be >= 0, got {x}")
    return x


def check_in_range(x, name, lo, hi):
    """Validate a scalar in the closed interval [lo, hi] and return it."""
    if not isinstance(x, numbers.Real):
        raise TypeError(f"{name} must be a real number, got {type(x).__name__}")
    x = float(x)
    if not lo <= x <= hi:
        raise ValueError(f"{name} must be in [{lo}, {hi}], got {x}")
    return x


def check_same_shape(a, b, name_a, name_b):
    """Raise ValueError when two arrays disagree in shape."""
    if np.shape(a) != np.shape(b):
        raise ValueError(
            f"{name_a} and {name_b} must have the same shape, "
            f"got {np.shape(a)} and {np.shape(b)}"
        )


def check_unit_vector(v, name, *, tol=1e-9):
    """Validate a 3-vector of unit length and return it as float64."""
    v = check_array(v, name, shape=(3,))
    check_finite(v, name)
    norm = float(np.linalg.norm(v))
    if abs(norm - 1.0) > tol:
        raise ValueError(f"{name} must be a unit vector, |{name}| = {norm:.12g}")
    return v


def _shape_str(shape):
    return "(" + ", ".join("*" if s is None else str(s) for s in shape) + ")"
