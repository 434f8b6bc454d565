"""Gaussian orthant probabilities and the closed-form complexity measure.

``P_Y`` is the prior mass ``P[sign Y~ = Y]`` for ``Y~ ~ N(0, K)``. Everything is
carried as ``log(1/P_Y)`` because ``P_Y`` underflows long before n gets large.

``complexity_A`` is the exact KL divergence from the isotropic orthant
posterior to the GP prior, which upper-bounds ``log(1/P_Y)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, NamedTuple, Optional, Sequence

import numpy as np
from scipy import integrate, special

from . import seeding
from .gram import (
    GramFactorization,
    geometric_mean_eigenvalue,
    logdet,
    rkhs_norm_sq,
    trace_inverse,
    whiten,
)
from .sampler import _check_labels, _tail_excess_icdf, sample_iso_orthant

LOG2 = math.log(2.0)


@dataclass(frozen=True)
class OrthantEstimate:
    log_inv_py: float
    std_error: float
    method: Literal["naive_mc", "ghk"]
    draws: int
    hits: Optional[int] = None
    failed: bool = False

    @property
    def py(self) -> float:
        return math.exp(-self.log_inv_py)


class MCValue(NamedTuple):
    value: float
    std_error: float
    draws: int


def _chunks(total: int, size: int):
    while total > 0:
        b = min(size, total)
        yield b
        total -= b


def orthant_naive_mc(
    f: GramFactorization, Y, draws: int, rng, batch: int = 200_000
) -> OrthantEstimate:
    """Fraction of prior draws that land in the orthant.

    The standard error of the log comes from the binomial error of the hit rate
    by the delta method. With zero hits the estimate is ``+inf`` and ``failed``
    is set; only a lower bound on ``log(1/P_Y)`` is known in that case.
    """
    Y = _check_labels(Y)
    if draws < 1:
        raise ValueError("draws must be >= 1")
    rng = seeding.as_generator(rng)
    hits = 0
    for b in _chunks(draws, max(1, batch // max(1, f.n))):
        z = rng.standard_normal((b, f.n)) @ f.L.T
        hits += int(np.count_nonzero(np.all(z * Y > 0, axis=1)))
    if hits == 0:
        return OrthantEstimate(math.inf, math.inf, "naive_mc", draws, hits=0, failed=True)
    p = hits / draws
    se_p = math.sqrt(p * (1.0 - p) / draws)
    return OrthantEstimate(-math.log(p), se_p / p, "naive_mc", draws, hits=hits)


def _ghk_log_weights(
    f: GramFactorization, Y: np.ndarray, draws: int, rng, order: Optional[Sequence[int]]
) -> np.ndarray:
    if order is not None:
        perm = np.asarray(order)
        if sorted(perm.tolist()) != list(range(f.n)):
            raise ValueError("order must be a permutation of range(n)")
        K = f.jittered[np.ix_(perm, perm)]
        Lf = np.linalg.cholesky(K)
        Y = Y[perm]
    else:
        Lf = f.L
    n = f.n
    z = np.zeros((draws, n))
    logw = np.zeros(draws)
    for i in range(n):
        mu = z[:, :i] @ Lf[i, :i]
        # need Y_i (mu + L_ii z_i) > 0  <=>  Y_i z_i > -Y_i mu / L_ii
        a = -Y[i] * mu / Lf[i, i]
        logw += special.log_ndtr(-a)
        u = 1.0 - rng.random(draws)
        z[:, i] = Y[i] * (a + _tail_excess_icdf(a, u))
    return logw


def orthant_ghk(
    f: GramFactorization,
    Y,
    draws: int,
    rng,
    order: Optional[Sequence[int]] = None,
    batch: int = 50_000,
) -> OrthantEstimate:
    """Sequential-conditioning (GHK) importance sampler for ``P_Y``.

    Writes ``Y~ = L z`` and draws ``z_1, z_2, ...`` one at a time from their
    standard normal law truncated so that each ``Y~_i`` has the required sign.
    The weight of a path is the product of the truncated masses, which is an
    unbiased estimate of ``P_Y``. Coordinates are visited in natural order
    unless ``order`` is given.
    """
    Y = _check_labels(Y)
    if Y.size != f.n:
        raise ValueError("label length does not match the factorisation")
    if draws < 1:
        raise ValueError("draws must be >= 1")
    rng = seeding.as_generator(rng)
    logw = np.concatenate(
        [_ghk_log_weights(f, Y, b, rng, order) for b in _chunks(draws, batch)]
    )
    top = float(np.max(logw))
    w = np.exp(logw - top)
    mean_w = float(np.mean(w))
    log_p = top + math.log(mean_w)
    if draws > 1:
        se_rel = float(np.std(w, ddof=1)) / math.sqrt(draws) / mean_w
    else:
        se_rel = math.inf
    return OrthantEstimate(-log_p, se_rel, "ghk", draws)


def complexity_A(f: GramFactorization, Y) -> float:
    """``n(log 2 - 1/2) + |K|^{1/n} [(1/2 - 1/pi) tr K^{-1} + (1/pi) Y^T K^{-1} Y]``."""
    Y = _check_labels(Y)
    n = f.n
    if Y.size != n:
        raise ValueError("label length does not match the factorisation")
    s2 = geometric_mean_eigenvalue(f)
    bracket = (0.5 - 1.0 / math.pi) * trace_inverse(f) + rkhs_norm_sq(f, Y) / math.pi
    return n * (LOG2 - 0.5) + s2 * bracket


def kl_iso_mc_check(f: GramFactorization, Y, draws: int, rng, batch: int = 200_000) -> MCValue:
    """Monte Carlo estimate of ``KL(Q_iso || P_GP)`` from isotropic orthant draws.

    Averages the exact log density ratio
    ``n log 2 - |y|^2 / (2 s^2) + y^T K^{-1} y / 2`` (the normalising
    ``|K|`` and ``s^{2n}`` cancel because ``s^2 = |K|^{1/n}``). Verification
    oracle for ``complexity_A``.
    """
    Y = _check_labels(Y)
    rng = seeding.as_generator(rng)
    n = f.n
    s2 = geometric_mean_eigenvalue(f)
    total = 0.0
    total_sq = 0.0
    for b in _chunks(draws, max(1, batch // max(1, n))):
        ups = sample_iso_orthant(s2, Y, b, rng).samples
        w = whiten(f, ups.T)
        quad = np.sum(w * w, axis=0)
        vals = n * LOG2 - 0.5 * np.sum(ups * ups, axis=1) / s2 + 0.5 * quad
        total += math.fsum(vals)
        total_sq += math.fsum(vals * vals)
    mean = total / draws
    var = max(total_sq / draws - mean * mean, 0.0) * draws / max(draws - 1, 1)
    return MCValue(mean, math.sqrt(var / draws), draws)


# --- closed forms and quadrature for tiny n ---------------------------------


def bivariate_orthant(rho: float) -> float:
    """``P[z_1 > 0, z_2 > 0]`` for unit-variance normals with correlation rho."""
    return 0.25 + math.asin(rho) / (2.0 * math.pi)


def trivariate_orthant(corr: np.ndarray) -> float:
    """Positive-orthant mass of a 3-d normal with correlation matrix ``corr``."""
    r = [corr[0, 1], corr[0, 2], corr[1, 2]]
    return 0.125 + sum(math.asin(x) for x in r) / (4.0 * math.pi)


def closed_form_orthant(K, Y) -> float:
    """``P_Y`` for n <= 3 from the arcsine formulas."""
    K = np.asarray(K, dtype=float)
    Y = _check_labels(Y)
    n = Y.size
    d = np.sqrt(np.diag(K))
    C = K / np.outer(d, d) * np.outer(Y, Y)
    if n == 1:
        return 0.5
    if n == 2:
        return bivariate_orthant(C[0, 1])
    if n == 3:
        return trivariate_orthant(C)
    raise ValueError("closed form only for n <= 3")


def log_inv_py_lse_quadrature(f: GramFactorization, Y, epsabs: float = 1e-10) -> float:
    """``-log int_{orthant} exp(-||f_y||_H^2 / 2) dy + log((2 pi)^n |K|) / 2``.

    ``||f_y||_H^2 = y^T K^{-1} y`` is the squared RKHS norm of the interpolant of
    y. Evaluated by adaptive quadrature over the orthant, so only for n <= 3.
    """
    Y = _check_labels(Y)
    n = f.n
    if n > 3:
        raise ValueError("quadrature form only for n <= 3")
    P = f.precision()

    def integrand(*t):
        y = np.asarray(t) * Y
        return math.exp(-0.5 * float(y @ P @ y))

    sd = np.sqrt(np.diag(f.jittered))
    ranges = [(0.0, 12.0 * s) for s in sd]
    val, _ = integrate.nquad(integrand, ranges, opts={"epsabs": epsabs, "epsrel": 1e-10})
    return -math.log(val) + 0.5 * (n * math.log(2.0 * math.pi) + logdet(f))
