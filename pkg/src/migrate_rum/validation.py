"""Input validation helpers shared by the estimators."""

import numpy as np
import pandas as pd

from .exceptions import DegenerateOutcome, SchemaError


def normalize_city(code):
    """Reduce a city code to its 4-digit prefecture prefix.

    Returns ``None`` for missing values. Integers, floats that hold integers
    and digit strings of at least four digits are accepted.
    """
    if code is None:
        return None
    if isinstance(code, float):
        if np.isnan(code):
            return None
        if not code.is_integer():
            raise SchemaError(f"city code {code!r} is not an integer")
        code = int(code)
    text = str(code).strip()
    if text == "" or text.lower() in {"nan", "none", "null"}:
        return None
    if text.endswith(".0"):
        text = text[:-2]
    if not text.isdigit() or len(text) < 4:
        raise SchemaError(f"city code {code!r} is not an NBS prefecture code")
    return text[:4]


def check_columns(frame, columns, what="data"):
    if not isinstance(frame, pd.DataFrame):
        raise TypeError(f"{what} must be a pandas DataFrame, got {type(frame).__name__}")
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise SchemaError(f"{what} is missing columns: {missing}")
    return frame


def as_design(X, columns=None):
    """Return ``(matrix, names)`` for a DataFrame or 2-D array."""
    if isinstance(X, pd.DataFrame):
        if columns is not None:
            check_columns(X, columns)
            X = X[list(columns)]
        names = [str(c) for c in X.columns]
        mat = X.to_numpy(dtype=float)
    else:
        mat = np.asarray(X, dtype=float)
        if mat.ndim == 1:
            mat = mat[:, None]
        names = list(columns) if columns is not None else [f"x{j}" for j in range(mat.shape[1])]
    if mat.ndim != 2:
        raise ValueError("design must be two-dimensional")
    if not np.all(np.isfinite(mat)):
        raise ValueError("design contains NaN or infinite values")
    return mat, names


def check_binary(y):
    y = np.asarray(y, dtype=float).ravel()
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise ValueError("outcome must be coded 0/1")
    if y.size == 0 or y.min() == y.max():
        raise DegenerateOutcome("outcome is constant in the estimation sample")
    return y


def factor_codes(values):
    """Integer codes for the distinct values of a 1-D array (sorted order)."""
    _, codes = np.unique(np.asarray(values), return_inverse=True)
    return codes.ravel()


def combine_factors(*columns):
    """Codes for the cross of several factor columns."""
    if len(columns) == 1:
        return factor_codes(columns[0])
    stacked = np.column_stack([factor_codes(c) for c in columns])
    _, codes = np.unique(stacked, axis=0, return_inverse=True)
    return codes.ravel()
