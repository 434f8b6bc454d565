"""Shared test utilities."""

import numpy as np

from kernel_bpm.data import normalize_rows


def random_rows(rng, n, d0):
    return normalize_rows(rng.standard_normal((n, d0)))


def random_pd(rng, n, ridge=0.1):
    W = rng.standard_normal((n, n + 3))
    return W @ W.T / (n + 3) + ridge * np.eye(n)
