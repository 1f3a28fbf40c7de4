"""Cholesky helpers with a diagonal jitter ladder."""

from __future__ import annotations

import numpy as np
from scipy import linalg as sla

JITTER_START = 1e-10
JITTER_MAX = 1e-6


class FactorizationError(np.linalg.LinAlgError):
    """Matrix stayed indefinite after the whole jitter ladder."""


def jittered_cholesky(A: np.ndarray, scale: float, start=JITTER_START, stop=JITTER_MAX):
    """Lower Cholesky factor of ``A``, escalating diagonal jitter on failure.

    Jitter is relative to ``scale`` (usually the signal variance) and grows by
    a factor of ten from ``start`` to ``stop``.  Returns ``(L, jitter)``.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    jitter = 0.0
    rel = start
    while True:
        try:
            L = sla.cholesky(A + jitter * np.eye(n), lower=True, check_finite=False)
            if np.all(np.isfinite(L)):
                return L, jitter
        except np.linalg.LinAlgError:
            pass
        if rel > stop * (1 + 1e-9):
            raise FactorizationError(
                f"matrix not positive definite after jitter {stop:g} * {scale:g}"
            )
        jitter = rel * scale
        rel *= 10.0


def chol_solve(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    return sla.cho_solve((L, True), b, check_finite=False)


def chol_logdet(L: np.ndarray) -> float:
    return 2.0 * float(np.sum(np.log(np.diag(L))))


def solve_lower(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    return sla.solve_triangular(L, b, lower=True, check_finite=False)


def solve_lower_t(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``L^T x = b`` for lower-triangular ``L``."""
    return sla.solve_triangular(L, b, lower=True, trans="T", check_finite=False)
