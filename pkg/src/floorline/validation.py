"""Input validation helpers shared by the estimators and the CLI."""

from __future__ import annotations

import numpy as np

from .code_model import SparseParityCheck


def check_parity_matrix(H) -> SparseParityCheck:
    """Accept a SparseParityCheck, a dense 0/1 array or a scipy sparse matrix."""
    if isinstance(H, SparseParityCheck):
        return H
    if hasattr(H, "toarray"):
        H = H.toarray()
    arr = np.asarray(H)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D parity-check matrix, got shape {arr.shape}")
    if not np.isin(arr, (0, 1)).all():
        raise ValueError("parity-check matrix must be binary")
    return SparseParityCheck.from_dense(arr)


def check_llrs(llrs, n: int) -> np.ndarray:
    """Float array of shape (n,) or (batch, n); rejects NaN."""
    x = np.asarray(llrs, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != n:
        raise ValueError(f"LLRs must have trailing dimension n = {n}, got {x.shape}")
    if np.isnan(x).any():
        raise ValueError("LLRs contain NaN")
    return x


def check_positive(name: str, value, integer: bool = False):
    if integer and int(value) != value:
        raise ValueError(f"{name} must be an integer, got {value!r}")
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value!r}")
    return int(value) if integer else float(value)


def check_probability_inputs(m_lambda: float, m_ext) -> tuple[float, np.ndarray]:
    m_ext = np.atleast_1d(np.asarray(m_ext, dtype=np.float64))
    if m_lambda < 0 or (m_ext < 0).any():
        raise ValueError("LLR means must be non-negative")
    return float(m_lambda), m_ext
