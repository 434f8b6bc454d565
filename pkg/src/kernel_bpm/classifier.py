"""Kernel interpolator and the Gibbs, Bayes, BPM and margin-scaled predictors.

A label vector ``y`` (any point of the orthant) defines the interpolant
``f_y(x) = K_xX K_XX^{-1} y``. Ensemble members add independent predictive
noise ``xi ~ N(0, K_xx - K_xX K_XX^{-1} K_Xx)`` before taking the sign; the BPM
drops the noise because its mean is zero.

``sign(0)`` is +1 throughout, and every tie is counted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import seeding
from .gram import GramFactorization, solve, whiten
from .kernel import KernelSpec, kernel_matrix, self_kernel
from .sampler import PosteriorSamples


class ClassifierError(ValueError):
    pass


def sign(v):
    """Elementwise sign with ``sign(0) = +1``."""
    return np.where(np.asarray(v) >= 0, 1.0, -1.0)


def coefficients(f: GramFactorization, labels) -> np.ndarray:
    """``K^{-1} labels``; labels may be a vector or an n x m matrix of label columns."""
    labels = np.asarray(labels, dtype=float)
    if labels.shape[0] != f.n:
        raise ClassifierError("label length does not match the factorisation")
    return solve(f, labels)


def interpolate(f: GramFactorization, labels, kxX) -> float:
    kxX = np.asarray(kxX, dtype=float)
    if kxX.shape != (f.n,):
        raise ClassifierError("Gram vector length does not match the factorisation")
    return float(kxX @ coefficients(f, labels))


def predictive_variances(
    spec: KernelSpec, f: GramFactorization, X, Xtest, KtX=None
) -> tuple[np.ndarray, int]:
    """Posterior variance at each test row, clamped at 0; returns (values, clamp count)."""
    if KtX is None:
        KtX = kernel_matrix(spec, Xtest, X)
    W = whiten(f, KtX.T)
    var = self_kernel(spec, Xtest) - np.sum(W * W, axis=0)
    clamped = int(np.count_nonzero(var < 0))
    return np.maximum(var, 0.0), clamped


def predictive_variance(spec: KernelSpec, f: GramFactorization, X, x) -> float:
    x = np.asarray(x, dtype=float)
    return float(predictive_variances(spec, f, X, x[None, :])[0][0])


def gibbs_votes(interpolants: np.ndarray, variances: np.ndarray, rng) -> np.ndarray:
    """Votes ``sign(f + xi)`` for a (test x member) interpolant matrix.

    A fresh noise draw is taken for every (test point, member) pair.
    """
    rng = seeding.as_generator(rng)
    interpolants = np.atleast_2d(np.asarray(interpolants, dtype=float))
    sd = np.sqrt(np.asarray(variances, dtype=float))
    noise = rng.standard_normal(interpolants.shape) * sd[:, None]
    return sign(interpolants + noise)


def ensemble_interpolants(f: GramFactorization, s: PosteriorSamples, KtX) -> np.ndarray:
    """``K_tX K^{-1} y_j`` for every test row t and sample j (shape T x m)."""
    KtX = np.atleast_2d(np.asarray(KtX, dtype=float))
    return KtX @ coefficients(f, s.samples.T)


def gibbs_predict(s: PosteriorSamples, f: GramFactorization, spec: KernelSpec, X, x, rng) -> np.ndarray:
    """One ``+-1`` vote per ensemble member at the test input x."""
    x = np.asarray(x, dtype=float)
    KtX = kernel_matrix(spec, x[None, :], X)
    var, _ = predictive_variances(spec, f, X, x[None, :], KtX=KtX)
    return gibbs_votes(ensemble_interpolants(f, s, KtX), var, rng)[0]


def majority(votes) -> tuple[np.ndarray, int]:
    """Row-wise majority of a vote matrix (ties go to +1); returns (decisions, ties)."""
    votes = np.atleast_2d(np.asarray(votes, dtype=float))
    total = votes.sum(axis=1)
    return sign(total), int(np.count_nonzero(total == 0))


def bayes_predict(s: PosteriorSamples, f, spec, X, x, rng) -> int:
    decision, _ = majority(gibbs_predict(s, f, spec, X, x, rng))
    return int(decision[0])


def bpm_predict(f: GramFactorization, mean_labels, kxX) -> int:
    """Sign of the interpolant of ``mean_labels`` (Y for the centroid, Y_com for the centre of mass)."""
    return int(sign(interpolate(f, mean_labels, kxX)))


def margin_scaled_predict(
    f: GramFactorization, Y, kxX, var: float, gamma_over_sigmaL: float, rng
) -> int:
    """NN-GP prediction at normalised margin ``gamma / sigma^L``.

    ``sign(f_Y(x) + eta * sqrt(var) / (gamma / sigma^L))`` with ``eta ~ N(0, 1)``.
    """
    if var < 0:
        raise ClassifierError("variance must be non-negative")
    if not gamma_over_sigmaL > 0:
        raise ClassifierError("normalised margin must be positive")
    rng = seeding.as_generator(rng)
    eta = rng.standard_normal()
    return int(sign(interpolate(f, Y, kxX) + eta * math.sqrt(var) / gamma_over_sigmaL))


def margin_scaled_votes(
    interpolant: np.ndarray, var: np.ndarray, gamma_over_sigmaL: float, rng
) -> np.ndarray:
    """Vectorised ``margin_scaled_predict`` over test points (one draw each)."""
    rng = seeding.as_generator(rng)
    interpolant = np.asarray(interpolant, dtype=float)
    eta = rng.standard_normal(interpolant.shape)
    return sign(interpolant + eta * np.sqrt(var) / gamma_over_sigmaL)


# --- evaluation -------------------------------------------------------------


@dataclass(frozen=True)
class ClassifierEval:
    eps_gibbs: float
    eps_bayes: float
    eps_bpm: float
    delta_approx: float
    alpha_gibbs: float
    test_count: int
    bayes_ties: int = 0
    bpm_ties: int = 0
    # per-test-point quantities kept for paired standard errors
    point_gibbs: np.ndarray = field(default=None, repr=False, compare=False)
    point_bayes: np.ndarray = field(default=None, repr=False, compare=False)
    point_bpm: np.ndarray = field(default=None, repr=False, compare=False)
    point_delta: np.ndarray = field(default=None, repr=False, compare=False)
    point_agreement: np.ndarray = field(default=None, repr=False, compare=False)

    def paired_se(self, a: np.ndarray, b: np.ndarray, scale_b: float = 1.0) -> float:
        """Standard error of ``mean(a) - scale_b * mean(b)`` over test points."""
        d = np.asarray(a, float) - scale_b * np.asarray(b, float)
        if d.size < 2:
            return 0.0
        return float(np.std(d, ddof=1) / math.sqrt(d.size))

    def se(self, which: str) -> float:
        v = getattr(self, f"point_{which}")
        if v.size < 2:
            return 0.0
        return float(np.std(v, ddof=1) / math.sqrt(v.size))


def evaluate(y_true, votes, bpm_predictions, bpm_ties: int = 0) -> ClassifierEval:
    """Empirical Gibbs, Bayes and BPM errors on a test set.

    ``votes`` is a (test x member) matrix of ``+-1`` ensemble votes and
    ``bpm_predictions`` the BPM decision at each test point. Rates are averaged
    with compensated summation so they do not depend on summation order.
    """
    y = np.asarray(y_true, dtype=float)
    votes = np.atleast_2d(np.asarray(votes, dtype=float))
    bpm = np.asarray(bpm_predictions, dtype=float)
    T = y.size
    if T < 1 or votes.shape[0] != T or bpm.shape != (T,):
        raise ClassifierError("misaligned prediction arrays")
    for arr in (y, votes, bpm):
        if not np.all(np.abs(arr) == 1):
            raise ClassifierError("predictions and labels must be +-1")

    mean_vote = votes.mean(axis=1)
    bayes, bayes_ties = majority(votes)
    point_gibbs = np.mean(votes != y[:, None], axis=1)
    point_bayes = (bayes != y).astype(float)
    point_bpm = (bpm != y).astype(float)
    point_delta = (bpm != bayes).astype(float)
    point_agreement = mean_vote**2

    def rate(v):
        return math.fsum(v) / T

    ev = ClassifierEval(
        eps_gibbs=rate(point_gibbs),
        eps_bayes=rate(point_bayes),
        eps_bpm=rate(point_bpm),
        delta_approx=rate(point_delta),
        alpha_gibbs=rate(point_agreement),
        test_count=T,
        bayes_ties=bayes_ties,
        bpm_ties=bpm_ties,
        point_gibbs=point_gibbs,
        point_bayes=point_bayes,
        point_bpm=point_bpm,
        point_delta=point_delta,
        point_agreement=point_agreement,
    )
    # holds point by point: a wrong BPM decision is either a wrong Bayes
    # decision or a BPM/Bayes disagreement
    if not ev.eps_bpm <= ev.eps_bayes + ev.delta_approx + 1e-12:
        raise AssertionError("eps_bpm <= eps_bayes + delta violated")
    return ev
