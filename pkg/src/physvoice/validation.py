"""Small input-validation helpers used by the estimators and core routines."""

from __future__ import annotations

import numpy as np

from .errors import ShapeError


def as_float_matrix(x, name: str = "X") -> np.ndarray:
    """Coerce to a 2-D float64 array with finite entries."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got ndim={arr.ndim}")
    if arr.size and not np.all(np.isfinite(arr)):
        raise ShapeError(f"{name} contains non-finite values")
    return arr


def as_float_vector(x, name: str = "x") -> np.ndarray:
    """Coerce to a 1-D float64 array with finite entries."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got ndim={arr.ndim}")
    if arr.size and not np.all(np.isfinite(arr)):
        raise ShapeError(f"{name} contains non-finite values")
    return arr


def check_n_features(x: np.ndarray, expected: int, name: str = "X") -> None:
    if x.shape[-1] != expected:
        raise ShapeError(
            f"{name} has {x.shape[-1]} features, the fitted transform expects {expected}"
        )


def as_label_vector(y, n_rows: int | None = None) -> np.ndarray:
    """Coerce labels to a 1-D int array of 0 (deepfake) and 1 (genuine)."""
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise ShapeError(f"y must be 1-D, got ndim={arr.ndim}")
    if n_rows is not None and arr.shape[0] != n_rows:
        raise ShapeError(f"y has {arr.shape[0]} rows, X has {n_rows}")
    out = arr.astype(np.int64)
    if arr.size and not np.array_equal(out, arr):
        raise ShapeError("y must contain integer class labels")
    if out.size and not np.all((out == 0) | (out == 1)):
        raise ShapeError("y must contain only the labels 0 and 1")
    return out
