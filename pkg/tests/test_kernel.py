import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kernel_bpm.kernel import (
    KernelError,
    KernelSpec,
    arccos_h,
    gram_matrix,
    gram_vector,
    kernel_eval,
    kernel_matrix,
    self_kernel,
)

from helpers import random_rows

mpmath.mp.dps = 40


def h_mp(t):
    t = mpmath.mpf(t)
    return (mpmath.sqrt(1 - t * t) + t * (mpmath.pi - mpmath.acos(t))) / mpmath.pi


def h_iter_mp(t, times):
    t = mpmath.mpf(t)
    for _ in range(times):
        t = h_mp(t)
    return float(t)


def test_h_endpoints_and_zero():
    assert arccos_h(1.0) == pytest.approx(1.0, abs=1e-15)
    assert arccos_h(-1.0) == pytest.approx(0.0, abs=1e-15)
    assert arccos_h(0.0) == pytest.approx(1.0 / math.pi, rel=1e-15)


def test_h_matches_high_precision():
    ts = np.linspace(-1, 1, 101)
    got = arccos_h(ts)
    want = np.array([float(h_mp(t)) for t in ts])
    np.testing.assert_allclose(got, want, rtol=1e-13, atol=1e-15)


def test_h_clamps_rounding_overshoot_and_rejects_beyond():
    assert arccos_h(1.0 + 5e-10) == pytest.approx(1.0)
    assert arccos_h(-1.0 - 5e-10) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(KernelError):
        arccos_h(1.0 + 1e-6)


def test_h_monotone_on_dense_grid():
    vals = arccos_h(np.linspace(-1, 1, 200_001))
    assert np.all(np.diff(vals) >= 0)
    assert vals.min() >= 0 and vals.max() <= 1


@pytest.mark.parametrize("depth", [2, 3, 7])
def test_orthogonal_inputs_compose_h(depth):
    d0 = 4
    x = np.array([2.0, 0, 0, 0])
    y = np.array([0, 2.0, 0, 0])
    spec = KernelSpec.arccosine(d0, depth)
    assert kernel_eval(spec, x, y) == pytest.approx(h_iter_mp(0, depth - 1), rel=1e-13)


def test_depth_three_at_zero_against_mpmath():
    # two applications of h starting from 0
    spec = KernelSpec.arccosine(2, 3)
    x = np.array([math.sqrt(2), 0])
    y = np.array([0, math.sqrt(2)])
    assert kernel_eval(spec, x, y) == pytest.approx(0.4937310902003715, rel=1e-13)


def test_normalised_diagonal(rng):
    X = random_rows(rng, 30, 17)
    K = gram_matrix(KernelSpec.arccosine(17, 7), X)
    np.testing.assert_allclose(np.diag(K), 1.0, atol=1e-12)
    np.testing.assert_array_equal(self_kernel(KernelSpec.arccosine(17, 7), X), 1.0)


def test_gram_small_cases():
    spec = KernelSpec.arccosine(3, 2)
    x = np.array([[math.sqrt(3), 0, 0]])
    np.testing.assert_allclose(gram_matrix(spec, x), [[1.0]])
    X = np.array([[math.sqrt(3), 0, 0], [0, math.sqrt(3), 0]])
    np.testing.assert_allclose(gram_matrix(spec, X), [[1, 1 / math.pi], [1 / math.pi, 1]], rtol=1e-14)


def test_gram_vector_orthogonal_and_elementwise(rng):
    spec = KernelSpec.arccosine(3, 2)
    X = np.array([[math.sqrt(3), 0, 0], [0, math.sqrt(3), 0]])
    np.testing.assert_allclose(gram_vector(spec, X, [0, 0, math.sqrt(3)]), [1 / math.pi] * 2)
    X = random_rows(rng, 6, 5)
    x = random_rows(rng, 1, 5)[0]
    spec = KernelSpec.arccosine(5, 4)
    loop = [kernel_eval(spec, xi, x) for xi in X]
    np.testing.assert_allclose(gram_vector(spec, X, x), loop, rtol=1e-14)


def test_linear_and_rbf_oracles(rng):
    A = rng.standard_normal((4, 3))
    B = rng.standard_normal((5, 3))
    np.testing.assert_allclose(kernel_matrix(KernelSpec.linear(3), A, B), A @ B.T / 3)
    d2 = ((A[:, None, :] - B[None, :, :]) ** 2).sum(-1)
    np.testing.assert_allclose(kernel_matrix(KernelSpec.rbf(3, 0.7), A, B), np.exp(-0.5 * d2 / 0.49))


def test_errors():
    with pytest.raises(KernelError):
        KernelSpec.arccosine(3, 1)
    with pytest.raises(KernelError):
        KernelSpec.rbf(3, 0.0)
    spec = KernelSpec.arccosine(3, 2)
    with pytest.raises(KernelError):
        kernel_eval(spec, [1, 0, 0], [0, 1])
    with pytest.raises(KernelError):
        kernel_eval(spec, [1, 0, 0], [0, 1, 0])  # not normalised


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 20), st.integers(2, 8), st.integers(2, 7), st.integers(0, 2**32 - 1))
def test_gram_symmetric_psd(n, d0, depth, seed):
    X = random_rows(np.random.default_rng(seed), n, d0)
    K = gram_matrix(KernelSpec.arccosine(d0, depth), X)
    np.testing.assert_array_equal(K, K.T)
    assert np.linalg.eigvalsh(K).min() >= -1e-8


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 9), st.integers(2, 7), st.integers(0, 2**32 - 1))
def test_kernel_eval_symmetric(d0, depth, seed):
    a, b = random_rows(np.random.default_rng(seed), 2, d0)
    spec = KernelSpec.arccosine(d0, depth)
    assert kernel_eval(spec, a, b) == kernel_eval(spec, b, a)
