"""Partial matrix-vector products ``D_T A f``: only the sampled rows are
computed, every other entry is exactly zero."""
from __future__ import annotations

import numpy as np

from .matrix import SparseMatrix, _check_vector


def _check_mask(A: SparseMatrix, mask) -> np.ndarray:
    idx = np.asarray(mask, dtype=np.int64)
    if idx.ndim != 1:
        raise ValueError("row mask must be a 1-D index list")
    if idx.size and (idx[0] < 0 or idx[-1] >= A.n):
        raise IndexError(f"row mask index outside [0, {A.n})")
    if idx.size > 1 and np.any(np.diff(idx) <= 0):
        raise ValueError("row mask must be strictly increasing")
    return idx


def partial_matvec(A: SparseMatrix, f, mask) -> np.ndarray:
    """Rows of ``A f`` listed in ``mask``; zero elsewhere.

    Work is proportional to the nonzeros of the selected rows. A selected
    entry is bitwise equal to the same entry of :func:`matvec`.
    """
    f = _check_vector(A, f)
    idx = _check_mask(A, mask)
    y = np.zeros(A.n)
    if idx.size == A.n:
        return A.csr @ f
    if idx.size:
        y[idx] = A.csr[idx] @ f
    return y


def apply_iteration_matrix(A: SparseMatrix, z, mask, omega_hat: float) -> np.ndarray:
    """``(I - omega_hat * D_T A) z`` without forming either matrix."""
    z = _check_vector(A, z)
    idx = _check_mask(A, mask)
    out = z.copy()
    if idx.size == A.n:
        out -= omega_hat * (A.csr @ z)
    elif idx.size:
        out[idx] -= omega_hat * (A.csr[idx] @ z)
    return out


def partial_matvec_many(A: SparseMatrix, F: np.ndarray, masks: np.ndarray) -> np.ndarray:
    """Column-wise ``D_{T_k} A F[:, k]`` for a boolean ``(n, L)`` mask block.

    All rows are evaluated and the unsampled ones discarded, which is cheaper
    than gathering distinct row sets per column; sampled entries are the same
    numbers the single-vector kernel produces.
    """
    Y = A.csr @ np.ascontiguousarray(F)
    return np.where(masks, Y, 0.0)
