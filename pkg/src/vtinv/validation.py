"""Input validation helpers shared across estimators and pipeline functions."""

from __future__ import annotations

import numpy as np

from .errors import ContractError


def as_float_matrix(x, name: str = "array") -> np.ndarray:
    """Coerce to a 2-D float64 array, rejecting anything else."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ContractError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def check_finite(arr: np.ndarray, name: str = "array") -> None:
    if not np.all(np.isfinite(arr)):
        raise ContractError(f"{name} contains non-finite values")


def check_columns(arr: np.ndarray, n_cols: int, name: str = "array") -> None:
    if arr.ndim != 2 or arr.shape[1] != n_cols:
        raise ContractError(
            f"{name} must have {n_cols} columns, got shape {arr.shape}"
        )


def check_same_rows(a: np.ndarray, b_len: int, a_name: str, b_name: str) -> None:
    if a.shape[0] != b_len:
        raise ContractError(
            f"{a_name} has {a.shape[0]} rows but {b_name} has {b_len}"
        )


def check_sequence_list(xs, name: str = "X") -> list[np.ndarray]:
    """Validate a list of per-sequence 2-D arrays with a common width."""
    if not isinstance(xs, (list, tuple)) or len(xs) == 0:
        raise ContractError(f"{name} must be a non-empty list of 2-D arrays")
    out = [as_float_matrix(x, f"{name}[{i}]") for i, x in enumerate(xs)]
    width = out[0].shape[1]
    for i, x in enumerate(out):
        if x.shape[1] != width:
            raise ContractError(
                f"{name}[{i}] has width {x.shape[1]}, expected {width}"
            )
    return out
