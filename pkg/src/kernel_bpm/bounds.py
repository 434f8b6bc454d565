"""Risk bounds for Gibbs classifiers and kernel interpolators.

Bounds above 1 are returned as they are; callers check ``is_vacuous``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple, Optional

from .orthant import OrthantEstimate

E = math.e

RADEMACHER_NOTE = "confidence term omitted"


class BoundError(ValueError):
    pass


def _check(n: int, delta: float) -> None:
    if n < 2:
        raise BoundError("need n >= 2")
    if not 0.0 < delta <= 1.0:
        raise BoundError("delta must lie in (0, 1]")


def gibbs_bound(kl: float, n: int, delta: float) -> float:
    """``1 - exp(-(KL + log(2n/delta)) / (n - 1))`` for a posterior on the version space."""
    _check(n, delta)
    if kl < 0:
        raise BoundError("KL divergence must be non-negative")
    if math.isinf(kl):
        return 1.0
    return -math.expm1(-(kl + math.log(2.0 * n / delta)) / (n - 1))


def bpm_bound_centroid(A: float, n: int, delta: float) -> float:
    """Risk bound for the interpolant of the labels Y: ``e * gibbs_bound(A)``."""
    return E * gibbs_bound(A, n, delta)


class ComBound(NamedTuple):
    point: float
    conservative: float


def bpm_bound_com(est: OrthantEstimate, n: int, delta: float) -> ComBound:
    """Risk bound for the centre-of-mass interpolant, at the estimate and at estimate + 2 SE."""
    if est.failed:
        return ComBound(E, E)
    point = E * gibbs_bound(est.log_inv_py, n, delta)
    cons = E * gibbs_bound(est.log_inv_py + 2.0 * est.std_error, n, delta)
    return ComBound(point, cons)


def rademacher_bound(rkhs_norm_sq_Y: float, n: int) -> float:
    """``4 sqrt(Y^T K^{-1} Y / n)``, without the confidence term."""
    if n < 1:
        raise BoundError("need n >= 1")
    if rkhs_norm_sq_Y < 0:
        raise BoundError("squared norm must be non-negative")
    return 4.0 * math.sqrt(rkhs_norm_sq_Y / n)


def c_bound(eps_gibbs: float, alpha_gibbs: float) -> float:
    """``1 - (1 - 2 eps)^2 / alpha``; only a valid bound when ``eps <= 1/2``."""
    if not alpha_gibbs > 0:
        raise BoundError("Gibbs agreement must be positive")
    return 1.0 - (1.0 - 2.0 * eps_gibbs) ** 2 / alpha_gibbs


def c_bound_applies(eps_gibbs: float) -> bool:
    return eps_gibbs <= 0.5


def optimistic_bpm_bound(eps_gibbs: float, alpha_gibbs: float, delta_approx: float) -> float:
    return c_bound(eps_gibbs, alpha_gibbs) + delta_approx


def is_vacuous(bound: Optional[float]) -> bool:
    return bound is not None and bound >= 1.0


@dataclass
class BoundReport:
    n: int
    delta: float
    kl_iso: float
    gibbs_bound: float
    bpm_bound_centroid: float
    rademacher_bound: float
    jitter_used: float
    log_inv_py: Optional[OrthantEstimate] = None
    bpm_bound_com: Optional[float] = None
    bpm_bound_com_conservative: Optional[float] = None
    c_bound: Optional[float] = None
    seed: Optional[int] = None
    rademacher_note: str = RADEMACHER_NOTE

    def vacuous(self) -> dict:
        return {
            "gibbs_bound": is_vacuous(self.gibbs_bound),
            "bpm_bound_centroid": is_vacuous(self.bpm_bound_centroid),
            "bpm_bound_com": is_vacuous(self.bpm_bound_com),
            "rademacher_bound": is_vacuous(self.rademacher_bound),
        }

    def as_dict(self) -> dict:
        return asdict(self)


def bound_report(
    *,
    n: int,
    delta: float,
    A: float,
    rkhs_norm_sq_Y: float,
    jitter_used: float,
    orthant: Optional[OrthantEstimate] = None,
    seed: Optional[int] = None,
) -> BoundReport:
    gb = gibbs_bound(A, n, delta)
    rep = BoundReport(
        n=n,
        delta=delta,
        kl_iso=A,
        gibbs_bound=gb,
        bpm_bound_centroid=E * gb,
        rademacher_bound=rademacher_bound(rkhs_norm_sq_Y, n),
        jitter_used=jitter_used,
        seed=seed,
    )
    if orthant is not None:
        com = bpm_bound_com(orthant, n, delta)
        rep.log_inv_py = orthant
        rep.bpm_bound_com = com.point
        rep.bpm_bound_com_conservative = com.conservative
    return rep
