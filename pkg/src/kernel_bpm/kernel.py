"""Kernel functions and Gram matrices.

The main kernel is the compositional arccosine kernel of a depth-L relu
network: ``k(x, x') = h(h(...h(x.x'/d0)))`` with ``L - 1`` applications of

    h(t) = (sqrt(1 - t^2) + t * (pi - arccos t)) / pi

Inputs must be normalised so that ``||x||^2 = d0``, which makes ``k(x, x) = 1``.
Linear and RBF kernels are provided for analytic cross-checks only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

CLAMP_TOL = 1e-9
NORM_TOL = 1e-9

KernelKind = Literal["arccosine", "linear", "rbf"]


class KernelError(ValueError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    kind: KernelKind
    input_dim: int
    depth: int = 7
    lengthscale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("arccosine", "linear", "rbf"):
            raise KernelError(f"unknown kernel kind {self.kind!r}")
        if self.input_dim < 1:
            raise KernelError("input_dim must be a positive integer")
        if self.kind == "arccosine" and self.depth < 2:
            raise KernelError("arccosine depth must be >= 2")
        if self.kind == "rbf" and not self.lengthscale > 0:
            raise KernelError("rbf lengthscale must be positive")

    @classmethod
    def arccosine(cls, input_dim: int, depth: int = 7) -> "KernelSpec":
        return cls("arccosine", input_dim, depth=depth)

    @classmethod
    def linear(cls, input_dim: int) -> "KernelSpec":
        return cls("linear", input_dim)

    @classmethod
    def rbf(cls, input_dim: int, lengthscale: float) -> "KernelSpec":
        return cls("rbf", input_dim, lengthscale=lengthscale)


def arccos_h(t):
    """One layer of the relu arccosine map; accepts scalars or arrays.

    Values within ``CLAMP_TOL`` of +-1 are clamped; anything further out
    raises ``KernelError``.
    """
    arr = np.asarray(t, dtype=float)
    if np.any(np.abs(arr) > 1.0 + CLAMP_TOL) or np.any(np.isnan(arr)):
        raise KernelError("arccos_h argument outside [-1, 1]")
    arr = np.clip(arr, -1.0, 1.0)
    out = (np.sqrt(1.0 - arr * arr) + arr * (np.pi - np.arccos(arr))) / np.pi
    # rounding can push h a hair outside [0, 1] at the endpoints
    out = np.clip(out, 0.0, 1.0)
    if np.ndim(t) == 0:
        return float(out)
    return out


def _as_rows(X, d0: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != d0:
        raise KernelError(f"expected inputs of dimension {d0}, got shape {X.shape}")
    return X


def _check_normalised(X: np.ndarray, d0: int) -> None:
    sq = np.einsum("ij,ij->i", X, X)
    if np.any(np.abs(sq - d0) > NORM_TOL * d0):
        worst = float(np.max(np.abs(sq - d0)) / d0)
        raise KernelError(
            f"arccosine kernel needs ||x||^2 = d0 (worst relative deviation {worst:.3g})"
        )


def _cross(spec: KernelSpec, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    d0 = spec.input_dim
    if spec.kind == "rbf":
        sq = (
            np.einsum("ij,ij->i", A, A)[:, None]
            + np.einsum("ij,ij->i", B, B)[None, :]
            - 2.0 * (A @ B.T)
        )
        np.maximum(sq, 0.0, out=sq)
        return np.exp(-0.5 * sq / spec.lengthscale**2)
    t = (A @ B.T) / d0
    if spec.kind == "linear":
        return t
    for _ in range(spec.depth - 1):
        t = arccos_h(t)
    return np.asarray(t)


def kernel_matrix(spec: KernelSpec, A, B) -> np.ndarray:
    """Cross-kernel matrix ``k(a_i, b_j)`` for row sets A and B."""
    A = _as_rows(A, spec.input_dim)
    B = _as_rows(B, spec.input_dim)
    if spec.kind == "arccosine":
        _check_normalised(A, spec.input_dim)
        _check_normalised(B, spec.input_dim)
    return _cross(spec, A, B)


def kernel_eval(spec: KernelSpec, x, x2) -> float:
    x = np.asarray(x, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x.ndim != 1 or x2.ndim != 1:
        raise KernelError("kernel_eval takes two vectors")
    return float(kernel_matrix(spec, x, x2)[0, 0])


def gram_matrix(spec: KernelSpec, X) -> np.ndarray:
    """Symmetric n x n Gram matrix of the rows of X."""
    X = _as_rows(X, spec.input_dim)
    if spec.kind == "arccosine":
        _check_normalised(X, spec.input_dim)
    K = _cross(spec, X, X)
    # BLAS may leave the product asymmetric in the last ulp
    return 0.5 * (K + K.T)


def gram_vector(spec: KernelSpec, X, x) -> np.ndarray:
    """Vector ``k(x, x_i)`` over the training rows."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise KernelError("gram_vector takes a single input vector")
    return kernel_matrix(spec, X, x)[:, 0]


def self_kernel(spec: KernelSpec, X) -> np.ndarray:
    """Diagonal ``k(x, x)`` for each row without forming the full Gram matrix."""
    X = _as_rows(X, spec.input_dim)
    if spec.kind == "rbf":
        return np.ones(X.shape[0])
    if spec.kind == "arccosine":
        _check_normalised(X, spec.input_dim)
        return np.ones(X.shape[0])
    return np.einsum("ij,ij->i", X, X) / spec.input_dim


__all__ = [
    "KernelSpec",
    "KernelError",
    "arccos_h",
    "kernel_eval",
    "kernel_matrix",
    "gram_matrix",
    "gram_vector",
    "self_kernel",
]
