"""Small input-checking helpers shared by the modules."""
from __future__ import annotations

import warnings

import numpy as np


def as_vector(v, n: int, name: str = "vector") -> np.ndarray:
    a = np.asarray(v, dtype=float).reshape(-1)
    if a.shape != (n,):
        raise ValueError(f"{name} must have {n} entries, got shape {np.shape(v)}")
    return a


def check_finite(a, name: str = "array"):
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite values")


def check_unit_vector(v, name: str = "direction", tol: float = 1e-6) -> np.ndarray:
    a = as_vector(v, 3, name)
    if abs(np.linalg.norm(a) - 1.0) > tol:
        raise ValueError(f"{name} must be unit length (|v| = {np.linalg.norm(a):.6g})")
    return a


def check_image(img, name: str = "image") -> np.ndarray:
    a = np.asarray(img)
    if a.ndim != 3 or a.shape[2] not in (3, 4):
        raise ValueError(f"{name} must be HxWx3, got shape {a.shape}")
    return a


def check_in_range(value: float, lo: float, hi: float, name: str):
    if not (lo <= value <= hi):
        raise ValueError(f"{name}={value} outside [{lo}, {hi}]")
    return value


def normalize_distribution(p: dict, name: str, tol: float = 1e-9) -> dict:
    """Validate a categorical distribution; renormalize with a warning if it does not sum to 1."""
    if not p:
        raise ValueError(f"{name} is empty")
    vals = np.array([float(v) for v in p.values()])
    if np.any(vals < 0) or not np.all(np.isfinite(vals)):
        raise ValueError(f"{name} has negative or non-finite probabilities")
    total = vals.sum()
    if total <= 0:
        raise ValueError(f"{name} sums to zero")
    if abs(total - 1.0) > tol:
        warnings.warn(f"{name} sums to {total:.6g}; renormalizing", stacklevel=3)
    return {k: float(v) / total for k, v in p.items()}
