"""Input validation helpers used across loaders and estimators."""

from __future__ import annotations

import numpy as np

from .base import InputDataError


def require_columns(df, cols, name: str):
    missing = [c for c in cols if c not in df.columns]
    if missing:
        raise InputDataError(f"{name} missing required columns: {missing}")


def as_points(x) -> np.ndarray:
    """Coerce to an (n, 2) float array of (lat, lon) points."""
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"expected (n, 2) points, got shape {pts.shape}")
    return pts


def check_positive(value, name: str, strict: bool = True):
    if strict and not value > 0:
        raise ValueError(f"{name} must be > 0, got {value}")
    if not strict and not value >= 0:
        raise ValueError(f"{name} must be >= 0, got {value}")
    return value


def parse_number(token: str, row: int, column: str, path) -> float:
    try:
        return float(token)
    except ValueError:
        raise InputDataError(
            f"{path}: unparseable numeric value {token!r} at row {row}, column {column!r}") from None
