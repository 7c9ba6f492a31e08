"""Derivative operators: stencil exactness, truncation order, EM checks, solves."""

import time

import numpy as np
import pytest

from ldl.errors import SingularOperatorError
from ldl.operators import (
    KINDS,
    appendix_convergence_factor,
    banded_product,
    check_em_matrix,
    derivative_matrix,
    identity_like,
    solve_banded,
)


def nonuniform_grid(n=41, seed=0):
    rng = np.random.default_rng(seed)
    steps = rng.uniform(0.5, 1.5, n - 1)
    return np.concatenate([[0.0], np.cumsum(steps)])


@pytest.mark.parametrize("kind", KINDS)
def test_constants_annihilated_interior(kind):
    x = nonuniform_grid()
    op = derivative_matrix(x, kind)
    out = op.apply(np.ones_like(x))
    assert np.max(np.abs(out)) < 1e-12


@pytest.mark.parametrize("kind", KINDS)
def test_constants_annihilated_with_ghost_extension(kind):
    x = nonuniform_grid(seed=3)
    op = derivative_matrix(x, kind, closure="ghost")
    out = op.apply(np.ones_like(x), ghost_lo_values=1.0, ghost_hi_values=1.0)
    assert np.max(np.abs(out)) < 1e-12


@pytest.mark.parametrize("kind", ["F2", "B2", "C"])
def test_second_order_kinds_exact_on_linears(kind):
    x = np.linspace(0.0, 2.0, 21)
    op = derivative_matrix(x, kind)
    out = op.apply(3.0 * x - 1.0)
    # rows with no upstream neighbour are zeroed by the interior closure
    rows = slice(0, 20) if kind == "F2" else (slice(1, 21) if kind == "B2" else slice(0, 21))
    assert np.allclose(out[rows], 3.0, atol=1e-11)


def test_uniform_grid_classical_stencils():
    h = 0.1
    x = np.arange(12) * h
    f2 = derivative_matrix(x, "F2").to_dense()
    assert np.allclose(f2[3, 3:6], np.array([-3.0, 4.0, -1.0]) / (2 * h), atol=1e-12)
    b2 = derivative_matrix(x, "B2").to_dense()
    assert np.allclose(b2[5, 3:6], np.array([1.0, -4.0, 3.0]) / (2 * h), atol=1e-12)
    c = derivative_matrix(x, "C").to_dense()
    assert np.allclose(c[4, 3:6], np.array([-1.0, 0.0, 1.0]) / (2 * h), atol=1e-12)
    c2 = derivative_matrix(x, "C2").to_dense()
    assert np.allclose(c2[4, 3:6], np.array([1.0, -2.0, 1.0]) / h**2, atol=1e-10)


def test_c2_on_square_gives_two():
    x = np.linspace(0.0, 1.0, 31)
    op = derivative_matrix(x, "C2")
    out = op.apply(x**2)
    assert np.allclose(out[1:-1], 2.0, atol=1e-9)


def test_c2_equals_forward_times_backward():
    x = nonuniform_grid(25, seed=5)
    f = derivative_matrix(x, "F")
    b = derivative_matrix(x, "B")
    prod = banded_product(f, b).to_dense()
    c2 = derivative_matrix(x, "C2").to_dense()
    assert np.allclose(prod, c2, atol=1e-12)


@pytest.mark.parametrize(
    "kind,order_min", [("F", 0.9), ("B", 0.9), ("C", 1.9), ("F2", 1.9), ("B2", 1.9), ("C2", 1.9)])
def test_truncation_order(kind, order_min):
    f = np.sin
    fp = np.cos
    fpp = lambda x: -np.sin(x)
    errs, hs = [], []
    for n in (40, 80, 160, 320):
        x = np.linspace(0.3, 2.1, n)
        op = derivative_matrix(x, kind)
        target = fpp(x) if kind == "C2" else fp(x)
        out = op.apply(f(x))
        # skip boundary fallback rows, they are intentionally lower order
        sl = slice(2, -2)
        errs.append(np.max(np.abs(out[sl] - target[sl])))
        hs.append(x[1] - x[0])
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert slope >= order_min


class TestEmMatrix:
    def test_identity_is_em(self):
        report = check_em_matrix(np.eye(5), s=2.0)
        assert report.is_em_matrix
        assert report.rho_b == pytest.approx(1.0)

    def test_shifted_b2_negative_loading(self):
        # (s + theta/2) I - b * B2 with b < 0 on a 10-node uniform grid.
        # Inverse positivity needs the real-root regime h <= |b| / (2(s + theta/2));
        # outside it the band recurrence oscillates and the inverse picks up
        # O(1e-3) negative tails (measured), so the grid span is chosen inside.
        theta, b, s = 3.0465, -0.3, 4.0465
        span = 9.0 * abs(b) / (2.0 * (s + theta / 2)) * 0.9
        x = np.linspace(0.0, span, 10)
        op = derivative_matrix(x, "B2").scaled(-b).plus_identity(s + theta / 2)
        report = check_em_matrix(op)
        assert report.is_em_matrix
        inv = np.linalg.inv(op.to_dense())
        assert inv.min() >= -1e-12

    def test_negative_eigenvalue_not_em(self):
        # positive off-diagonal dominating the row sum: eigenvalue below zero,
        # so rho(sI - M) >= s for every shift
        m = np.array([[0.1, -10.0, 0.0], [-10.0, 0.1, 0.0], [0.0, 0.0, 0.1]])
        report = check_em_matrix(m)
        assert report.is_em_matrix is False

    def test_partial_report_beyond_cap(self):
        m = np.eye(300)
        report = check_em_matrix(m, size_cap=200)
        assert report.is_em_matrix is None
        assert report.spectral_radius_bound >= 1.0

    def test_convergence_factor_below_one_in_regime(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            theta = rng.uniform(0.5, 5.0)
            b = -rng.uniform(0.01, 2.0)
            h = rng.uniform(0.01, 1.0)
            s_min = theta / 2 + 3 * abs(b) / h
            s = s_min + rng.uniform(0.01, 5.0)
            lam = appendix_convergence_factor(s, theta, b, h)
            assert abs(lam) < 1.0


class TestSolveBanded:
    def test_identity(self):
        x = np.linspace(0, 1, 20)
        eye = identity_like(x, 1, 1)
        rhs = np.sin(x)
        assert np.allclose(solve_banded(eye, rhs), rhs, atol=1e-14)

    def test_toeplitz_recovers_known_solution(self):
        n = 50
        ab = np.zeros((3, n))
        ab[0, 1:] = -1.0
        ab[1, :] = 2.0
        ab[2, :-1] = -1.0
        x_true = np.arange(1.0, n + 1.0)
        from ldl import kernels
        rhs = kernels.banded_matvec(1, 1, ab, x_true)
        got = kernels.solve_banded(1, 1, ab, rhs)
        assert np.allclose(got, x_true, atol=1e-9)

    def test_pentadiagonal_vs_dense(self):
        rng = np.random.default_rng(8)
        n = 20
        ab = rng.normal(size=(5, n))
        ab[2] += 8.0
        from ldl import kernels
        dense = np.zeros((n, n))
        for i in range(n):
            for j in range(max(0, i - 2), min(n, i + 3)):
                dense[i, j] = ab[2 + i - j, j]
        rhs = rng.normal(size=n)
        got = kernels.solve_banded(2, 2, ab, rhs)
        ref = np.linalg.solve(dense, rhs)
        assert np.max(np.abs(got - ref)) < 1e-10

    def test_residual_contract(self):
        # strictly diagonally dominant system: the well-conditioned case the
        # residual bound is stated for
        rng = np.random.default_rng(12)
        n = 400
        ab = rng.normal(size=(4, n))
        ab[1] = np.sum(np.abs(ab), axis=0) + 1.0  # row u=1 is the diagonal
        from ldl import kernels
        rhs = rng.normal(size=n)
        x = kernels.solve_banded(2, 1, ab, rhs)
        resid = kernels.banded_matvec(2, 1, ab, x) - rhs
        assert np.max(np.abs(resid)) <= 1e-10 * max(np.max(np.abs(rhs)), 1.0)

    def test_zero_pivot_raises(self):
        n = 8
        ab = np.zeros((3, n))
        ab[1] = 1.0
        ab[1, 4] = 0.0
        with pytest.raises(SingularOperatorError):
            solve_banded((1, 1, ab), np.ones(n))

    @pytest.mark.slow
    def test_linear_runtime_scaling(self):
        from ldl import kernels
        rng = np.random.default_rng(0)

        def bench(n):
            ab = rng.normal(size=(3, n))
            ab[1] = np.sign(ab[1]) * (np.abs(ab[1]) + 4.0)
            rhs = rng.normal(size=n)
            best = np.inf
            for _ in range(7):
                t0 = time.perf_counter()
                kernels.solve_banded(1, 1, ab, rhs)
                best = min(best, time.perf_counter() - t0)
            return best

        bench(10_000)  # warm up
        t1 = bench(200_000)
        t2 = bench(400_000)
        assert t2 / t1 <= 2.5
