"""Cholesky factorisation of a Gram matrix and the scalar functionals built on it.

All access to ``K^{-1}`` goes through the triangular factor. When K is
numerically singular a diagonal jitter is added, escalating over a fixed
ladder, and the jitter actually used is kept on the factorisation so that
downstream reports can show it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

SYMMETRY_RTOL = 1e-10
# multiples of the mean diagonal tried in order; the first rung is no jitter
JITTER_LADDER = (0.0, 1e-12, 1e-10, 1e-8, 1e-6, 1e-4)
# a rung is rejected when some squared pivot falls below this fraction of the
# mean diagonal: such a factor exists in floating point but solves through it
# are dominated by rounding
PIVOT_FLOOR = 1e-10


class GramError(ValueError):
    pass


class NotSymmetricError(GramError):
    pass


class NotPositiveDefiniteError(GramError):
    pass


@dataclass(frozen=True, eq=False)
class GramFactorization:
    """Lower Cholesky factor of ``K + jitter_used * I``."""

    K: np.ndarray
    L: np.ndarray
    jitter_used: float
    _precision: list = field(default_factory=list, repr=False)

    @property
    def n(self) -> int:
        return self.K.shape[0]

    @property
    def jittered(self) -> np.ndarray:
        return self.K + self.jitter_used * np.eye(self.n)

    def precision(self) -> np.ndarray:
        """``(K + jitter I)^{-1}`` from the factor, computed once and cached."""
        if not self._precision:
            P = linalg.cho_solve((self.L, True), np.eye(self.n))
            P = 0.5 * (P + P.T)
            P.setflags(write=False)
            self._precision.append(P)
        return self._precision[0]


def factorize(K) -> GramFactorization:
    K = np.array(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise GramError(f"expected a square matrix, got shape {K.shape}")
    if not np.all(np.isfinite(K)):
        raise GramError("matrix has non-finite entries")
    n = K.shape[0]
    scale = max(np.max(np.abs(K)), np.finfo(float).tiny) if n else 1.0
    if n and np.max(np.abs(K - K.T)) > SYMMETRY_RTOL * scale:
        raise NotSymmetricError("Gram matrix is not symmetric")
    K = 0.5 * (K + K.T)
    K.setflags(write=False)
    if n == 0:
        return GramFactorization(K, np.zeros((0, 0)), 0.0)

    dbar = float(np.mean(np.diag(K)))
    if not dbar > 0:
        raise NotPositiveDefiniteError("mean diagonal is not positive")
    for rung in JITTER_LADDER:
        jitter = rung * dbar
        try:
            Lf = np.linalg.cholesky(K + jitter * np.eye(n))
        except np.linalg.LinAlgError:
            continue
        pivots = np.diag(Lf) ** 2
        if np.all(np.isfinite(Lf)) and np.min(pivots) >= PIVOT_FLOOR * dbar:
            Lf.setflags(write=False)
            return GramFactorization(K, Lf, jitter)
    raise NotPositiveDefiniteError(
        f"matrix not positive definite even with jitter {JITTER_LADDER[-1]:g} x mean diagonal"
    )


def _vec(f: GramFactorization, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape[0] != f.n:
        raise GramError(f"expected leading dimension {f.n}, got {v.shape}")
    return v


def solve(f: GramFactorization, v) -> np.ndarray:
    """``(K + jitter I)^{-1} v``; v may be a vector or an n x k matrix."""
    v = _vec(f, v)
    return linalg.cho_solve((f.L, True), v)


def whiten(f: GramFactorization, v) -> np.ndarray:
    """``L^{-1} v`` so that ``v^T K^{-1} v = ||whiten(v)||^2``."""
    v = _vec(f, v)
    return linalg.solve_triangular(f.L, v, lower=True)


def logdet(f: GramFactorization) -> float:
    return float(2.0 * np.sum(np.log(np.diag(f.L))))


def trace_inverse(f: GramFactorization) -> float:
    # tr (L L^T)^{-1} = ||L^{-1}||_F^2
    Linv = linalg.solve_triangular(f.L, np.eye(f.n), lower=True)
    return float(np.sum(Linv * Linv))


def rkhs_norm_sq(f: GramFactorization, v) -> float:
    w = whiten(f, v)
    return float(np.dot(w, w))


def geometric_mean_eigenvalue(f: GramFactorization) -> float:
    """``|K|^{1/n}``, the isotropic posterior scale."""
    return float(np.exp(logdet(f) / f.n))
