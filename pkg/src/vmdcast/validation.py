"""Input validation helpers.

Kept deliberately small: callers get float64 arrays back so downstream
numerics never depend on the caller's dtype.
"""
from __future__ import annotations

import numpy as np

from .errors import AlignmentError, InsufficientDataError


def check_series(x, name: str = "series", min_len: int = 1) -> np.ndarray:
    """Coerce to a finite 1-d float64 array of at least ``min_len`` samples."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise AlignmentError(f"{name} must be 1-d, got shape {arr.shape}")
    if arr.shape[0] < min_len:
        raise InsufficientDataError(
            f"{name} needs at least {min_len} samples, got {arr.shape[0]}"
        )
    if not np.all(np.isfinite(arr)):
        raise AlignmentError(f"{name} contains non-finite values")
    return arr


def check_matrix(x, name: str = "features", min_rows: int = 1) -> np.ndarray:
    """Coerce to a 2-d float64 array; 1-d input becomes a single column."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise AlignmentError(f"{name} must be 2-d, got shape {arr.shape}")
    if arr.shape[0] < min_rows:
        raise InsufficientDataError(
            f"{name} needs at least {min_rows} rows, got {arr.shape[0]}"
        )
    return arr


def check_same_length(a, b, name_a: str, name_b: str) -> None:
    if len(a) != len(b):
        raise AlignmentError(
            f"{name_a} (len {len(a)}) and {name_b} (len {len(b)}) must align"
        )
