"""Convection-diffusion HV step: operator identities, oracles, stability."""

import numpy as np
import pytest

from ldl.diffusion import DiffusionOperatorSet, SchemeParams, apply_L, hv_half_step


def ops_2d(n=40, mu=(0.03, 0.01), sig=(0.2, 0.3), rho=0.5, span=3.0):
    x1 = np.linspace(-span, span, n)
    x2 = np.linspace(-span, span, n)
    rho_m = np.array([[1.0, rho], [rho, 1.0]])
    return (x1, x2), DiffusionOperatorSet((x1, x2), mu, sig, rho_m)


class TestApplyL:
    def test_constants_annihilated_interior(self):
        (x1, x2), ops = ops_2d()
        out = apply_L(np.ones((40, 40)), ops)
        assert np.max(np.abs(out[1:-1, 1:-1])) < 1e-12

    def test_linear_field_gives_drift(self):
        (x1, x2), ops = ops_2d(mu=(0.03, 0.01))
        field = np.broadcast_to(x1[:, None], (40, 40))
        out = apply_L(field, ops)
        assert np.allclose(out[1:-1, 1:-1], 0.03, atol=1e-10)

    def test_product_field_mixed(self):
        # f = x1 x2: L f = rho s1 s2 + mu1 x2 + mu2 x1 (symbolic evaluation)
        (x1, x2), ops = ops_2d(mu=(0.03, 0.01), sig=(0.2, 0.3), rho=0.5)
        f = x1[:, None] * x2[None, :]
        out = apply_L(f, ops)
        expect = 0.5 * 0.2 * 0.3 + 0.03 * x2[None, :] + 0.01 * x1[:, None]
        expect = np.broadcast_to(expect, (40, 40))
        assert np.allclose(out[1:-1, 1:-1], expect[1:-1, 1:-1], atol=1e-9)


class TestHvStep:
    def test_zero_operator_identity(self):
        (x1, x2), ops = ops_2d(mu=(0.0, 0.0), sig=(0.0, 0.0), rho=0.0)
        rng = np.random.default_rng(0)
        f = rng.random((40, 40))
        out = hv_half_step(f, ops, SchemeParams(dtau=0.02))
        assert np.allclose(out, f, atol=1e-14)

    def test_heat_kernel_oracle_1d_degenerate(self):
        # sigma2 = 0 along the second axis: the Gaussian bump evolves by the
        # 1D heat kernel; compare after several substeps
        n = 201
        x1 = np.linspace(-4.0, 4.0, n)
        x2 = np.linspace(-1.0, 1.0, 5)
        sig1 = 0.5
        ops = DiffusionOperatorSet((x1, x2), (0.0, 0.0), (sig1, 0.0), np.eye(2))
        s0 = 0.3
        f = np.exp(-0.5 * x1**2 / s0**2)[:, None] * np.ones((1, 5))
        dtau = 0.02
        steps = 10
        params = SchemeParams(dtau=dtau)
        out = f
        for _ in range(steps):
            out = hv_half_step(out, ops, params, delta=dtau)
        t = steps * dtau
        s_t2 = s0**2 + sig1**2 * t
        expect = (s0 / np.sqrt(s_t2)) * np.exp(-0.5 * x1**2 / s_t2)
        err = np.abs(out[:, 2] - expect)
        # interior error O(dtau^2 + h^2); measured 4.0e-4 at this resolution
        assert err[5:-5].max() < 8e-4

    def test_rho_zero_factorizes(self):
        n = 50
        x1 = np.linspace(-2.0, 2.0, n)
        x2 = np.linspace(-2.0, 2.0, n)
        ops2 = DiffusionOperatorSet((x1, x2), (0.02, -0.01), (0.2, 0.3), np.eye(2))
        f1 = np.exp(-2.0 * x1**2)
        f2 = np.exp(-1.5 * (x2 - 0.2) ** 2)
        f = f1[:, None] * f2[None, :]
        params = SchemeParams(dtau=0.02)
        out2d = hv_half_step(f, ops2, params)
        # tensor-product of two 1D solves
        ops_a = DiffusionOperatorSet((x1,), (0.02,), (0.2,), None)
        ops_b = DiffusionOperatorSet((x2,), (-0.01,), (0.3,), None)
        g1 = hv_half_step(f1, ops_a, params)
        g2 = hv_half_step(f2, ops_b, params)
        ref = g1[:, None] * g2[None, :]
        assert np.max(np.abs(out2d - ref)[1:-1, 1:-1]) < 1e-8

    def test_temporal_order(self):
        # Richardson on a smooth field: HV is second order in time
        (x1, x2), ops = ops_2d(n=60, span=3.0)
        f0 = np.exp(-1.5 * (x1[:, None] ** 2 + x2[None, :] ** 2))

        def run(dtau, steps):
            out = f0
            p = SchemeParams(dtau=dtau)
            for _ in range(steps):
                out = hv_half_step(out, ops, p, delta=dtau)
            return out

        c = run(0.1, 4)
        m = run(0.05, 8)
        fine = run(0.025, 16)
        e1 = np.max(np.abs(c - m))
        e2 = np.max(np.abs(m - fine))
        order = np.log2(e1 / e2)
        assert order >= 1.8

    def test_stability_large_time_step(self):
        # dtau/h^2 around 100: no oscillatory blow-up
        n = 101
        x1 = np.linspace(-1.0, 1.0, n)
        h = x1[1] - x1[0]
        dtau = 100.0 * h**2 / 0.04  # sigma^2/2 * dtau / h^2 = 100-ish scale
        ops = DiffusionOperatorSet((x1,), (0.0,), (0.2,), None)
        f = (x1 > 0).astype(float)
        out = f
        p = SchemeParams(dtau=dtau)
        for _ in range(20):
            out = hv_half_step(out, ops, p, delta=dtau)
        assert np.isfinite(out).all()
        assert out.max() < 1.0 + 1e-9 and out.min() > -0.05

    def test_positivity_smooth_fields(self):
        rng = np.random.default_rng(5)
        (x1, x2), ops = ops_2d(n=50)
        params = SchemeParams(dtau=0.01)
        for _ in range(5):
            c1, c2 = rng.uniform(-1.5, 1.5, 2)
            f = np.exp(-2.0 * ((x1[:, None] - c1) ** 2 + (x2[None, :] - c2) ** 2))
            out = hv_half_step(f, ops, params)
            assert out.min() >= -1e-12

    def test_constants_preserved_interior(self):
        (x1, x2), ops = ops_2d(n=30)
        f = np.ones((30, 30))
        out = hv_half_step(f, ops, SchemeParams(dtau=0.05))
        assert np.max(np.abs(out - 1.0)) < 1e-12
