"""Small-scale self-checks of the identities and inequalities the library relies on.

Each check returns a ``CheckResult``. ``run_all(seed)`` runs every suite at a
size that finishes in well under a minute. With ``corrupt=True`` every
tolerance is replaced by an impossible one, which exercises the failure path
of callers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import seeding
from .bounds import c_bound, optimistic_bpm_bound
from .classifier import (
    coefficients,
    ensemble_interpolants,
    evaluate,
    gibbs_votes,
    margin_scaled_votes,
    predictive_variances,
    sign,
)
from .data import synthetic_gaussians
from .gram import factorize, geometric_mean_eigenvalue
from .kernel import KernelSpec, gram_matrix, kernel_matrix
from .orthant import (
    bivariate_orthant,
    closed_form_orthant,
    complexity_A,
    kl_iso_mc_check,
    log_inv_py_lse_quadrature,
    orthant_ghk,
    orthant_naive_mc,
)
from .sampler import (
    batch_standard_error,
    sample_gp_orthant_gibbs,
    sample_gp_orthant_rejection,
    sample_iso_orthant,
)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


class _Tol:
    """Tolerance multipliers; a corrupted instance makes every check fail."""

    def __init__(self, corrupt: bool = False):
        self.corrupt = corrupt

    def __call__(self, tol: float) -> float:
        return -math.inf if self.corrupt else tol


# --- helpers shared with the test-suite -------------------------------------


def random_correlation_matrix(n: int, rng) -> np.ndarray:
    """A random well-conditioned correlation matrix (Wishart draw plus ridge, rescaled)."""
    rng = seeding.as_generator(rng)
    W = rng.standard_normal((n, n + 2))
    K = W @ W.T / (n + 2) + 0.2 * np.eye(n)
    d = np.sqrt(np.diag(K))
    return K / np.outer(d, d)


def random_labels(n: int, rng) -> np.ndarray:
    rng = seeding.as_generator(rng)
    return np.where(rng.random(n) < 0.5, -1.0, 1.0)


def halfspace_agreement(samples: np.ndarray, v: np.ndarray, centre: np.ndarray) -> np.ndarray:
    """Per-sample indicator that the sample and the centre lie on the same side of ``v``."""
    return (sign(samples @ v) == sign(centre @ v)).astype(float)


# --- suites -----------------------------------------------------------------


def check_identity_kernel(seed: int, tol: _Tol) -> CheckResult:
    worst = 0.0
    for n in (1, 4, 16):
        f = factorize(np.eye(n))
        worst = max(worst, abs(complexity_A(f, np.ones(n)) - n * math.log(2.0)))
    est = orthant_naive_mc(factorize(np.eye(4)), np.ones(4), 100_000, seeding.generator(seed, 1))
    p_se = est.py * est.std_error
    z = abs(est.py - 2.0**-4) / p_se
    ok = worst <= tol(1e-12) and z <= tol(4.0)
    return CheckResult(
        "Identity-kernel orthant KL (A = n log 2, P_Y = 2^-n)",
        ok,
        f"max |A - n log 2| = {worst:.1e}; naive MC {est.py:.5f} vs 0.0625 ({z:.2f} SE)",
    )


def _instances(seed: int, count: int, n: int):
    for i in range(count):
        rng = seeding.generator(seed, 2, i)
        yield factorize(random_correlation_matrix(n, rng)), random_labels(n, rng)


def check_kl_equality(seed: int, tol: _Tol) -> CheckResult:
    zs = []
    for i, (f, Y) in enumerate(_instances(seed, 3, 5)):
        mc = kl_iso_mc_check(f, Y, 100_000, seeding.generator(seed, 3, i))
        zs.append(abs(mc.value - complexity_A(f, Y)) / mc.std_error)
    ok = max(zs) <= tol(4.0)
    return CheckResult(
        "Orthant KL equality (A = KL(Q_iso || P_GP))",
        ok,
        "deviations in SE: " + ", ".join(f"{z:.2f}" for z in zs),
    )


def check_kl_inequality(seed: int, tol: _Tol) -> CheckResult:
    slack = []
    for i, (f, Y) in enumerate(_instances(seed, 3, 5)):
        est = orthant_ghk(f, Y, 20_000, seeding.generator(seed, 4, i))
        slack.append((complexity_A(f, Y) - est.log_inv_py) / max(est.std_error, 1e-300))
    ok = min(slack) >= -tol(4.0)
    return CheckResult(
        "Orthant KL upper bound (A >= log 1/P_Y)",
        ok,
        "margins in SE: " + ", ".join(f"{s:.1f}" for s in slack),
    )


def check_second_moment(seed: int, tol: _Tol) -> CheckResult:
    n, m, s2 = 4, 100_000, 1.7
    Y = random_labels(n, seeding.generator(seed, 5))
    S = sample_iso_orthant(s2, Y, m, seeding.generator(seed, 6)).samples
    prods = (S[:, :, None] * S[:, None, :]).reshape(m, n * n)
    emp = prods.mean(axis=0)
    se = prods.std(axis=0, ddof=1) / math.sqrt(m)
    target = (s2 * (np.eye(n) + (2.0 / math.pi) * np.outer(Y, Y) * (1 - np.eye(n)))).ravel()
    z = float(np.max(np.abs(emp - target) / se))
    return CheckResult(
        "Second-moment identity of the isotropic orthant posterior",
        z <= tol(4.0),
        f"max deviation {z:.2f} SE",
    )


def check_gibbs_vs_rejection(seed: int, tol: _Tol) -> CheckResult:
    n = 3
    K = random_correlation_matrix(n, seeding.generator(seed, 7))
    Y = random_labels(n, seeding.generator(seed, 8))
    f = factorize(K)
    gibbs = sample_gp_orthant_gibbs(f, Y, 20_000, 100, 5, seed=seeding.derive(seed, 9), chains=20)
    rej = sample_gp_orthant_rejection(f, Y, 20_000, rng=seeding.generator(seed, 10))
    gm, gse = batch_standard_error(gibbs.samples, gibbs.chain_index())
    rm = rej.samples.mean(axis=0)
    rse = rej.samples.std(axis=0, ddof=1) / math.sqrt(rej.m)
    z = float(np.max(np.abs(gm - rm) / np.hypot(gse, rse)))
    return CheckResult(
        "Gibbs sampler agrees with the rejection oracle",
        z <= tol(4.0),
        f"max mean deviation {z:.2f} SE",
    )


def check_bivariate(seed: int, tol: _Tol) -> CheckResult:
    zs = []
    for i, rho in enumerate((-0.5, 0.5)):
        K = np.array([[1.0, rho], [rho, 1.0]])
        est = orthant_naive_mc(factorize(K), np.ones(2), 100_000, seeding.generator(seed, 11, i))
        zs.append(abs(est.py - bivariate_orthant(rho)) / (est.py * est.std_error))
    return CheckResult(
        "Bivariate orthant probability (1/4 + arcsin(rho) / 2 pi)",
        max(zs) <= tol(3.0),
        "deviations in SE: " + ", ".join(f"{z:.2f}" for z in zs),
    )


def check_ghk_vs_naive(seed: int, tol: _Tol) -> CheckResult:
    f, Y = next(_instances(seed, 1, 4))
    naive = orthant_naive_mc(f, Y, 200_000, seeding.generator(seed, 12))
    ghk = orthant_ghk(f, Y, 20_000, seeding.generator(seed, 13))
    z = abs(naive.log_inv_py - ghk.log_inv_py) / math.hypot(naive.std_error, ghk.std_error)
    return CheckResult(
        "GHK and naive Monte Carlo orthant estimates agree",
        z <= tol(4.0),
        f"naive {naive.log_inv_py:.4f}, GHK {ghk.log_inv_py:.4f} ({z:.2f} SE)",
    )


def check_lse_identity(seed: int, tol: _Tol) -> CheckResult:
    worst = 0.0
    for n in (2, 3):
        rng = seeding.generator(seed, 14, n)
        K = random_correlation_matrix(n, rng)
        Y = random_labels(n, rng)
        quad = log_inv_py_lse_quadrature(factorize(K), Y)
        worst = max(worst, abs(quad + math.log(closed_form_orthant(K, Y))))
    return CheckResult(
        "Log-sum-exp identity for log 1/P_Y (quadrature vs closed form)",
        worst <= tol(1e-6),
        f"max abs difference {worst:.1e}",
    )


def check_grunbaum(seed: int, tol: _Tol) -> CheckResult:
    n = 5
    K = random_correlation_matrix(n, seeding.generator(seed, 15))
    Y = random_labels(n, seeding.generator(seed, 16))
    f = factorize(K)
    post = sample_gp_orthant_gibbs(f, Y, 20_000, 100, 5, seed=seeding.derive(seed, 17), chains=20)
    centre = post.samples.mean(axis=0)
    dirs = seeding.generator(seed, 18).standard_normal((50, n))
    worst = math.inf
    for v in dirs:
        frac, se = batch_standard_error(halfspace_agreement(post.samples, v, centre), post.chain_index())
        worst = min(worst, float(frac) - (1.0 / math.e - tol(4.0) * float(se)))
    return CheckResult(
        "Centre-of-mass halfspace (each halfspace through it holds >= 1/e of the mass)",
        worst >= 0.0,
        f"smallest margin above 1/e - 4 SE: {worst:.3f}",
    )


def _small_experiment(seed: int):
    ds = synthetic_gaussians(360, 8, 1.5, seeding.derive(seed, 19))
    test, train = ds.split(300)
    spec = KernelSpec.arccosine(8, depth=3)
    f = factorize(gram_matrix(spec, train.X))
    KtX = kernel_matrix(spec, test.X, train.X)
    var, _ = predictive_variances(spec, f, train.X, test.X, KtX=KtX)
    post = sample_iso_orthant(geometric_mean_eigenvalue(f), train.Y, 200, seeding.generator(seed, 20))
    votes = gibbs_votes(ensemble_interpolants(f, post, KtX), var, seeding.generator(seed, 21))
    centroid = KtX @ coefficients(f, train.Y)
    return test, f, KtX, var, centroid, evaluate(test.Y, votes, sign(centroid))


def check_classifier_inequalities(seed: int, tol: _Tol) -> list[CheckResult]:
    _, _, _, _, _, ev = _small_experiment(seed)
    g, b, p = ev.point_gibbs, ev.point_bayes, ev.point_bpm
    out = []
    gap1 = ev.eps_bayes - 2 * ev.eps_gibbs
    se1 = ev.paired_se(b, g, 2.0)
    out.append(CheckResult(
        "Pessimistic Gibbs-Bayes (Bayes error <= 2 x Gibbs error)",
        gap1 <= tol(4.0) * se1,
        f"eps_bayes {ev.eps_bayes:.3f}, 2 eps_gibbs {2 * ev.eps_gibbs:.3f}",
    ))
    gap3 = ev.eps_bpm - math.e * ev.eps_gibbs
    se3 = ev.paired_se(p, g, math.e)
    out.append(CheckResult(
        "Pessimistic Gibbs-BPM (BPM error <= e x Gibbs error)",
        gap3 <= tol(4.0) * se3,
        f"eps_bpm {ev.eps_bpm:.3f}, e eps_gibbs {math.e * ev.eps_gibbs:.3f}",
    ))
    wrong_bpm = int(np.sum(p))
    wrong_bayes = int(np.sum(b))
    disagree = int(np.sum(ev.point_delta))
    out.append(CheckResult(
        "Bayes-BPM (BPM error <= Bayes error + disagreement, on counts)",
        wrong_bpm <= wrong_bayes + disagree + (0 if not tol.corrupt else -10**9),
        f"{wrong_bpm} <= {wrong_bayes} + {disagree}",
    ))
    if ev.eps_gibbs <= 0.5:
        cb = c_bound(ev.eps_gibbs, ev.alpha_gibbs)
        ob = optimistic_bpm_bound(ev.eps_gibbs, ev.alpha_gibbs, ev.delta_approx)
        se_b = ev.se("bayes")
        se_p = ev.se("bpm")
        out.append(CheckResult(
            "Average Gibbs agreement (C-bound on the Bayes error)",
            ev.eps_bayes <= cb + tol(4.0) * se_b,
            f"eps_bayes {ev.eps_bayes:.3f} <= C-bound {cb:.3f}",
        ))
        out.append(CheckResult(
            "Optimistic Gibbs-BPM (C-bound plus disagreement on the BPM error)",
            ev.eps_bpm <= ob + tol(4.0) * se_p,
            f"eps_bpm {ev.eps_bpm:.3f} <= {ob:.3f}",
        ))
    else:
        out.append(CheckResult("Average Gibbs agreement (C-bound on the Bayes error)", not tol.corrupt, "not applicable"))
        out.append(CheckResult("Optimistic Gibbs-BPM (C-bound plus disagreement on the BPM error)", not tol.corrupt, "not applicable"))
    return out


def check_margin_concentration(seed: int, tol: _Tol) -> CheckResult:
    _, _, _, var, centroid, _ = _small_experiment(seed)
    bpm = sign(centroid)
    reps = 50
    rates = []
    for j, g in enumerate((1e-6, 1e-2, 1.0, 1e6)):
        rng = seeding.generator(seed, 22, j)
        d = np.stack([margin_scaled_votes(centroid, var, g, rng) != bpm for _ in range(reps)])
        rates.append(float(d.mean()))
    ok = rates[-1] < 1e-3 + tol(0.0) and abs(rates[0] - 0.5) <= tol(0.05)
    ok = ok and all(b <= a + tol(0.02) for a, b in zip(rates, rates[1:]))
    return CheckResult(
        "Margin concentration (noise vanishes as the normalised margin grows)",
        ok,
        "disagreement rates: " + ", ".join(f"{r:.3f}" for r in rates),
    )


SUITES: tuple[Callable, ...] = (
    check_identity_kernel,
    check_kl_equality,
    check_kl_inequality,
    check_second_moment,
    check_gibbs_vs_rejection,
    check_bivariate,
    check_ghk_vs_naive,
    check_lse_identity,
    check_grunbaum,
    check_classifier_inequalities,
    check_margin_concentration,
)


def run_all(seed: int = 0, corrupt: bool = False) -> list[CheckResult]:
    tol = _Tol(corrupt)
    results: list[CheckResult] = []
    for suite in SUITES:
        r = suite(seed, tol)
        results.extend(r if isinstance(r, list) else [r])
    return results
