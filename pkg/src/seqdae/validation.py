"""Input validation helpers for the estimator API."""

from __future__ import annotations

import numpy as np

from .errors import ContractViolation


def check_sequences(X, modality: str | None = None, dtype=np.float32) -> np.ndarray:
    """Validate a sequence array of shape (n, V, d) or (n, V, C, H, W).

    Returns a contiguous array of the requested dtype.  The modality is
    inferred from the rank when not given.
    """
    X = np.asarray(X)
    if X.ndim not in (3, 5):
        raise ContractViolation(
            f"expected (n, V, d) or (n, V, C, H, W) sequences, got shape {X.shape}")
    if X.shape[0] < 1 or X.shape[1] < 1:
        raise ContractViolation(f"empty sequence batch: shape {X.shape}")
    inferred = "vector" if X.ndim == 3 else "image"
    if modality is not None and modality != inferred:
        raise ContractViolation(f"expected {modality} sequences, got rank-{X.ndim} input")
    if not np.isfinite(X).all():
        raise ContractViolation("sequences contain non-finite values")
    return np.ascontiguousarray(X, dtype=dtype)


def check_matching_sequences(a, b) -> tuple[np.ndarray, np.ndarray]:
    """Validate two batches that must agree in length and frame shape."""
    a = check_sequences(a)
    b = check_sequences(b)
    if a.shape[1:] != b.shape[1:]:
        raise ContractViolation(f"sequence shapes differ: {a.shape[1:]} vs {b.shape[1:]}")
    return a, b
