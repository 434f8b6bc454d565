"""Samplers for the orthant-truncated label posteriors.

Two posteriors over training labels ``Y~`` live on the orthant ``sign Y~ = Y``:

* ``gp``: ``N(0, K)`` restricted to the orthant (the zero-one likelihood GP
  posterior). Sampled by coordinate-wise Gibbs sweeps, with an exact but slow
  rejection sampler kept as an oracle for small n.
* ``iso``: ``N(0, s^2 I)`` restricted to the orthant with ``s^2 = |K|^{1/n}``.
  Coordinates are independent half-normals, so draws are exact.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
from scipy import special

from . import seeding
from .gram import GramFactorization, factorize

log = logging.getLogger(__name__)

DEFAULT_BURN_IN = 100
DEFAULT_THINNING = 10
# truncation points further than this into the upper tail use the exponential
# proposal instead of the inverse CDF
TAIL_SWITCH = 0.5

PosteriorKind = Literal["gp", "iso"]


class SamplerError(RuntimeError):
    pass


class RejectionBudgetError(SamplerError):
    def __init__(self, accepted: int, attempts: int):
        self.accepted = accepted
        self.attempts = attempts
        self.acceptance_rate = accepted / attempts if attempts else 0.0
        super().__init__(
            f"rejection budget exhausted: {accepted} accepted in {attempts} attempts "
            f"(acceptance rate ~ {self.acceptance_rate:.3g})"
        )


@dataclass(frozen=True)
class ChainMeta:
    burn_in: int = 0
    thinning: int = 1
    seed: Optional[int] = None
    chains: int = 1
    attempts: Optional[int] = None
    accepted: Optional[int] = None

    @property
    def acceptance_rate(self) -> Optional[float]:
        if not self.attempts:
            return None
        return self.accepted / self.attempts


@dataclass(frozen=True, eq=False)
class PosteriorSamples:
    samples: np.ndarray
    posterior_kind: PosteriorKind
    Y: np.ndarray
    chain_meta: ChainMeta = ChainMeta()

    def __post_init__(self):
        S = np.asarray(self.samples, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        if S.ndim != 2 or S.shape[0] < 1 or S.shape[1] != Y.shape[0]:
            raise SamplerError(f"bad sample matrix shape {S.shape} for n = {Y.shape[0]}")
        if self.chain_meta.thinning < 1:
            raise SamplerError("thinning must be >= 1")
        if not np.all(S * Y > 0):
            raise SamplerError("sample outside the orthant sign(Y~) = Y")
        S.setflags(write=False)
        object.__setattr__(self, "samples", S)
        object.__setattr__(self, "Y", Y)

    @property
    def m(self) -> int:
        return self.samples.shape[0]

    @property
    def n(self) -> int:
        return self.samples.shape[1]

    def chain_index(self) -> np.ndarray:
        """Chain id of every row; rows are stored chain-major."""
        chains = max(1, self.chain_meta.chains)
        per_chain = -(-self.m // chains)
        return np.arange(self.m) // per_chain


def _check_labels(Y) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 1 or not np.all(np.abs(Y) == 1):
        raise SamplerError("labels must be a vector of +-1")
    return Y


# --- univariate truncated normal -------------------------------------------


def _upper_tail_excess(a: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw ``W - a`` for ``W ~ N(0, 1)`` conditioned on ``W > a``; strictly positive."""
    a = np.asarray(a, dtype=float)
    out = np.empty(a.shape)
    todo = np.arange(a.size)
    flat_a = a.reshape(-1)
    flat = out.reshape(-1)
    while todo.size:
        at = flat_a[todo]
        body = at <= TAIL_SWITCH
        res = np.empty(todo.size)
        ok = np.zeros(todo.size, dtype=bool)

        # inverse CDF on the reflected variable: -W = Phi^{-1}(U * Phi(-a))
        if np.any(body):
            u = 1.0 - rng.random(np.count_nonzero(body))
            w = -special.ndtri(u * special.ndtr(-at[body]))
            res[body] = w - at[body]
            ok[body] = np.isfinite(res[body])

        # exponential proposal with the optimal rate (Robert 1995)
        tail = ~body
        if np.any(tail):
            ab = at[tail]
            lam = 0.5 * (ab + np.sqrt(ab * ab + 4.0))
            e = rng.standard_exponential(ab.size) / lam
            z = ab + e
            accept = rng.random(ab.size) <= np.exp(-0.5 * (z - lam) ** 2)
            res[tail] = e
            ok[tail] = accept

        ok &= res > 0
        flat[todo[ok]] = res[ok]
        todo = todo[~ok]
    return out


def truncated_normal(mean, sd, sign, rng) -> np.ndarray:
    """Vectorised draw from ``N(mean, sd^2)`` conditioned on ``sign * x > 0``."""
    rng = seeding.as_generator(rng)
    mean, sd, sign = np.broadcast_arrays(
        np.asarray(mean, float), np.asarray(sd, float), np.asarray(sign, float)
    )
    if np.any(~(sd > 0)):
        raise SamplerError("sd must be positive")
    # sign*x > 0  <=>  W > a  with  x = mean + sign*sd*W
    a = -sign * mean / sd
    return sign * sd * _upper_tail_excess(a, rng)


def truncated_normal_sample(mean: float, sd: float, sign: int, rng) -> float:
    return float(truncated_normal(mean, sd, sign, rng))


def _tail_excess_icdf(a: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Log-domain inverse-CDF form of ``_upper_tail_excess`` driven by given uniforms.

    One uniform per draw, accurate for any ``a`` because the truncated mass is
    carried as ``log Phi(-a)``.
    """
    logp = np.log(u) + special.log_ndtr(-a)
    w = -special.ndtri_exp(logp)
    excess = w - a
    # u == 1 or rounding at the boundary; keep the draw strictly inside
    return np.maximum(excess, np.finfo(float).tiny)


# --- isotropic posterior ----------------------------------------------------


def sample_iso_orthant(scale_sq: float, Y, m: int, rng) -> PosteriorSamples:
    """Exact draws ``Y_i * |z_i|`` with ``z_i ~ N(0, scale_sq)`` independent."""
    if not scale_sq > 0:
        raise SamplerError("scale_sq must be positive")
    if m < 1:
        raise SamplerError("m must be >= 1")
    Y = _check_labels(Y)
    seed = None if isinstance(rng, np.random.Generator) else int(rng)
    rng = seeding.as_generator(rng)
    z = np.abs(rng.standard_normal((m, Y.size)))
    while True:
        zero = z == 0
        if not zero.any():
            break
        z[zero] = np.abs(rng.standard_normal(np.count_nonzero(zero)))
    S = Y * (math.sqrt(scale_sq) * z)
    return PosteriorSamples(S, "iso", Y, ChainMeta(seed=seed))


# --- GP posterior -----------------------------------------------------------


def _default_chains(m: int) -> int:
    return max(1, min(m, 1000, -(-m // 100)))


def sample_gp_orthant_gibbs(
    f: GramFactorization,
    Y,
    m: int,
    burn_in: int = DEFAULT_BURN_IN,
    thinning: int = DEFAULT_THINNING,
    seed: int = 0,
    chains: Optional[int] = None,
    chunk: int = 128,
) -> PosteriorSamples:
    """Coordinate-wise Gibbs sampler for ``N(0, K)`` truncated to ``sign = Y``.

    The conditional of coordinate i given the rest is normal with mean
    ``-sum_{j != i} P_ij y_j / P_ii`` and variance ``1 / P_ii``, where P is the
    precision matrix, truncated to the sign of ``Y_i``.

    Several independent chains run in lockstep so that each coordinate update is
    one vector operation across chains. Chain ``c`` draws all of its uniforms
    from ``seeding.generator(seed, c)``, so its trajectory does not depend on
    how many other chains run beside it. Each chain emits ``ceil(m / chains)``
    states (every ``thinning``-th sweep after ``burn_in``); rows are returned
    chain-major and trimmed to ``m``.
    """
    if not isinstance(f, GramFactorization):
        raise SamplerError("expected a GramFactorization")
    Y = _check_labels(Y)
    n = f.n
    if Y.size != n:
        raise SamplerError("label length does not match the factorisation")
    if m < 1 or burn_in < 0 or thinning < 1:
        raise SamplerError("need m >= 1, burn_in >= 0, thinning >= 1")
    C = chains or _default_chains(m)
    per_chain = -(-m // C)

    P = f.precision()
    pdiag = np.diag(P).copy()
    cond_sd = 1.0 / np.sqrt(pdiag)
    # off-diagonal precision scaled by the diagonal: mean_i = -S @ B[:, i]
    B = P / pdiag[None, :]
    np.fill_diagonal(B, 0.0)
    B = np.ascontiguousarray(B.T)

    rngs = [seeding.generator(seed, c) for c in range(C)]
    marg_sd = np.sqrt(np.diag(f.jittered))
    S = np.stack([Y * marg_sd * (np.abs(r.standard_normal(n)) + 1e-3) for r in rngs])

    total = burn_in + per_chain * thinning
    out = np.empty((C, per_chain, n))
    done = 0
    kept = 0
    while done < total:
        steps = min(chunk, total - done)
        U = np.stack([1.0 - r.random((steps, n)) for r in rngs], axis=1)
        for t in range(steps):
            u_t = U[t]
            for i in range(n):
                # row-wise reduction keeps each chain independent of the batch shape
                mu = -np.sum(S * B[i], axis=1)
                a = -Y[i] * mu / cond_sd[i]
                S[:, i] = Y[i] * cond_sd[i] * _tail_excess_icdf(a, u_t[:, i])
            done += 1
            if done > burn_in and (done - burn_in) % thinning == 0:
                out[:, kept] = S
                kept += 1
    samples = out.reshape(C * per_chain, n)[:m]
    meta = ChainMeta(burn_in=burn_in, thinning=thinning, seed=int(seed), chains=C)
    return PosteriorSamples(samples, "gp", Y, meta)


def sample_gp_orthant_rejection(
    K,
    Y,
    m: int,
    max_attempts: int = 10_000_000,
    rng=0,
    batch: int = 65536,
) -> PosteriorSamples:
    """Exact iid draws: sample ``N(0, K)`` and keep the draws in the orthant.

    The acceptance rate is the orthant probability, so this is only usable for
    small n. Raises ``RejectionBudgetError`` once ``max_attempts`` prior draws
    have been spent without collecting ``m`` samples.
    """
    f = K if isinstance(K, GramFactorization) else factorize(K)
    Y = _check_labels(Y)
    if Y.size != f.n:
        raise SamplerError("label length does not match K")
    if m < 1:
        raise SamplerError("m must be >= 1")
    seed = None if isinstance(rng, np.random.Generator) else int(rng)
    rng = seeding.as_generator(rng)
    kept = []
    accepted = 0
    attempts = 0
    while accepted < m:
        if attempts >= max_attempts:
            raise RejectionBudgetError(accepted, attempts)
        b = min(batch, max_attempts - attempts)
        draws = rng.standard_normal((b, f.n)) @ f.L.T
        attempts += b
        hit = np.all(draws * Y > 0, axis=1)
        if hit.any():
            kept.append(draws[hit])
            accepted += int(hit.sum())
    samples = np.concatenate(kept)[:m]
    return PosteriorSamples(samples, "gp", Y, ChainMeta(seed=seed, attempts=attempts, accepted=accepted))


def centre_of_mass_labels(s: PosteriorSamples) -> np.ndarray:
    """Monte Carlo estimate of ``E[Y~]`` under the sampled posterior."""
    if s.m < 1:
        raise SamplerError("empty sample set")
    if s.posterior_kind == "iso":
        warnings.warn(
            "the isotropic centre of mass is Y * s * sqrt(2/pi) in closed form",
            stacklevel=2,
        )
    return s.samples.mean(axis=0)


def batch_standard_error(values: np.ndarray, groups: Optional[np.ndarray] = None, batches: int = 10):
    """Mean and standard error of the rows of ``values``.

    With ``groups`` (e.g. chain ids) the group means are treated as independent
    replicates; otherwise the rows are cut into ``batches`` contiguous batches.
    """
    values = np.asarray(values, dtype=float)
    if groups is None:
        groups = np.arange(values.shape[0]) * batches // values.shape[0]
    ids, inv = np.unique(groups, return_inverse=True)
    if ids.size < 2:
        raise SamplerError("need at least two batches for a standard error")
    flat = values.reshape(values.shape[0], -1)
    counts = np.bincount(inv).astype(float)
    sums = np.stack([np.bincount(inv, weights=col, minlength=ids.size) for col in flat.T], axis=1)
    means = sums / counts[:, None]
    w = counts / counts.sum()
    grand = w @ means
    # weighted between-batch variance of the grand mean
    dev = means - grand
    var = (w * w) @ (dev * dev) * ids.size / (ids.size - 1)
    shape = values.shape[1:]
    return grand.reshape(shape), np.sqrt(var).reshape(shape)
