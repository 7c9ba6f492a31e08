"""Banded kernel correctness: native and fallback must agree with dense algebra."""

import numpy as np
import pytest

from ldl import kernels
from ldl.errors import SingularOperatorError
from ldl.kernels import _fallback


def random_banded(rng, n, l, u, dominant=True):
    ab = rng.normal(size=(l + u + 1, n))
    if dominant:
        ab[u] = np.sign(ab[u]) * (np.abs(ab[u]) + l + u + 2)
    dense = np.zeros((n, n))
    for i in range(n):
        for j in range(max(0, i - l), min(n, i + u + 1)):
            dense[i, j] = ab[u + i - j, j]
    return ab, dense


@pytest.mark.parametrize("l,u", [(1, 1), (2, 1), (2, 2), (0, 2), (2, 0)])
def test_solve_matches_dense(l, u):
    rng = np.random.default_rng(42)
    n = 73
    ab, dense = random_banded(rng, n, l, u)
    b = rng.normal(size=(n, 5))
    x = kernels.solve_banded(l, u, ab, b)
    assert np.allclose(dense @ x, b, atol=1e-10)
    x1 = kernels.solve_banded(l, u, ab, b[:, 0])
    assert x1.shape == (n,)
    assert np.allclose(x1, x[:, 0])


@pytest.mark.parametrize("l,u", [(1, 1), (2, 2), (2, 1)])
def test_matvec_matches_dense(l, u):
    rng = np.random.default_rng(3)
    n = 40
    ab, dense = random_banded(rng, n, l, u, dominant=False)
    v = rng.normal(size=(n, 4))
    assert np.allclose(kernels.banded_matvec(l, u, ab, v), dense @ v, atol=1e-12)
    assert np.allclose(kernels.banded_matvec(l, u, ab, v[:, 2]), dense @ v[:, 2], atol=1e-12)


def test_factor_reuse():
    rng = np.random.default_rng(11)
    n = 50
    ab, dense = random_banded(rng, n, 2, 2)
    lu = kernels.BandedLU(2, 2, ab)
    for _ in range(3):
        b = rng.normal(size=n)
        assert np.allclose(dense @ lu.solve(b), b, atol=1e-10)


def test_backends_agree():
    rng = np.random.default_rng(5)
    n = 64
    ab, _ = random_banded(rng, n, 2, 1)
    b = rng.normal(size=(n, 3))
    x_fb = _fallback.solve_factored(_fallback.factor(2, 1, ab), b)
    x = kernels.solve_banded(2, 1, ab, b)
    assert np.allclose(x, x_fb, atol=1e-9)
    assert np.allclose(
        kernels.banded_matvec(2, 1, ab, b), _fallback.matvec(2, 1, ab, b), atol=1e-12)


def test_singular_matrix_raises():
    # row of zeros: singular under any pivoting strategy
    n = 6
    ab = np.zeros((3, n))
    ab[1] = 1.0
    ab[1, 3] = 0.0
    with pytest.raises(SingularOperatorError):
        kernels.solve_banded(1, 1, ab, np.ones(n))


def test_input_rhs_not_clobbered():
    rng = np.random.default_rng(9)
    n = 30
    ab, _ = random_banded(rng, n, 1, 1)
    b = rng.normal(size=(n, 2))
    b_copy = b.copy()
    kernels.solve_banded(1, 1, ab, b)
    assert np.array_equal(b, b_copy)
