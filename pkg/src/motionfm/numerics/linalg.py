from __future__ import annotations

import numpy as np

from ..errors import NotPSDError, ShapeError

NEG_EIG_TOL = 1e-6


def matrix_sqrt_psd(a: np.ndarray) -> np.ndarray:
    """Principal square root of a symmetric positive semi-definite matrix.

    The input is symmetrized, eigenvalues in ``[-1e-6, 0)`` are clamped to
    zero, anything more negative raises :class:`NotPSDError`.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"matrix_sqrt_psd needs a square matrix, got {a.shape}")
    sym = 0.5 * (a + a.T)
    w, q = np.linalg.eigh(sym)
    if w.size and w.min() < -NEG_EIG_TOL:
        raise NotPSDError(f"matrix is not PSD: smallest eigenvalue {w.min():.3e}")
    root = np.sqrt(np.clip(w, 0.0, None))
    return (q * root) @ q.T
