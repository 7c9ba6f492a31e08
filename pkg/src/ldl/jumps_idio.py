"""Per-axis idiosyncratic jump steps.

Two realizations of the one-dimensional jump semigroup exp(dt * J), where
J f = integral of [f(x+y) - f(x) - (e^y - 1) f'(x)] against the jump measure:

* Merton (Gaussian) jumps: the compound-Poisson exponential is a Poisson
  mixture of k-fold Gaussian convolutions.  The martingale compensator is a
  pure translation, absorbed into the kernel means for k >= 1 and applied with
  a monotone cubic interpolation for the jump-free (k = 0) term.  Kernels are
  integrated exactly against the piecewise-linear representation of the field,
  so the one-step operator is a dense nonnegative matrix plus tail masses that
  read the absorbed state below the barrier and the constant extension above
  the grid.

* One-sided exponential jumps: the generator has the closed resolvent form
  c * (phi*I +- a*A2)^{-1} a^2 C2 on the asset grid; the step is its Pade(1,1)
  exponential, two banded matrices solved in O(N).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import ndtr

from .errors import ConfigError, NumericsError
from .grids import Grid1D
from .model import ExpJumps, MertonJumps
from .operators import (
    OperatorMatrix,
    check_em_matrix,
    derivative_matrix,
    pin_dirichlet_row as _pin_row,
)

_SERIES_TOL = 1e-9
_KERNEL_WIDTH = 8.0  # standard deviations


def poisson_weights(lam):
    """Poisson(k; lam) weights truncated at cumulative >= 1 - 1e-9, renormalized."""
    if lam < 0:
        raise ConfigError("Poisson mean must be >= 0")
    weights = [math.exp(-lam)]
    k = 0
    while sum(weights) < 1.0 - _SERIES_TOL:
        k += 1
        weights.append(weights[-1] * lam / k)
        if k > 400:
            raise NumericsError("Poisson series failed to accumulate mass")
    w = np.array(weights)
    return w / w.sum()


def gaussian_hat_weights(x, mean, sd, truncate=_KERNEL_WIDTH):
    """Exact integrals of the Gaussian kernel against the hat basis.

    Returns (W, below, above): the rows of W hold, for each target node x_i,
    the weight of every node value in integral f_lin(x_i + y) N(y; mean, sd^2) dy,
    where f_lin is the piecewise-linear interpolant; `below`/`above` carry the
    kernel mass landing outside the grid.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    mu = x[:, None] + mean          # kernel center per target node
    z = (x[None, :] - mu) / sd      # (n_targets, n_nodes)
    cdf = ndtr(z)
    pdf = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    # segment integrals I0 = P(z in [x_j, x_j+1]), I1 = E[z; segment]
    i0 = cdf[:, 1:] - cdf[:, :-1]
    i1 = mu * i0 - sd * (pdf[:, 1:] - pdf[:, :-1])
    h = np.diff(x)
    w = np.zeros((n, n))
    # rising part of hat j over [x_j, x_j+1]: weight of node j+1
    w[:, 1:] += (i1 - x[None, :-1] * i0) / h[None, :]
    # falling part over [x_j, x_j+1]: weight of node j
    w[:, :-1] += (x[None, 1:] * i0 - i1) / h[None, :]
    below = cdf[:, 0]
    above = 1.0 - cdf[:, -1]
    if truncate is not None:
        w[np.abs(x[None, :] - mu) > truncate * sd] = 0.0
    return w, below, above


def _shift_pchip(x, values, delta, lower, upper):
    """Evaluate the field at x + delta via monotone cubic interpolation.

    ``values`` has shape (n,) or (n, lines); ``lower``/``upper`` supply the
    extension values outside the grid (scalars or per-line arrays).
    """
    squeeze = values.ndim == 1
    v = values[:, None] if squeeze else values
    n, lines = v.shape
    h0 = x[1] - x[0]
    hn = x[-1] - x[-2]
    xp = np.concatenate([[x[0] - 2 * h0, x[0] - h0], x, [x[-1] + hn, x[-1] + 2 * hn]])
    lo = np.broadcast_to(np.asarray(lower, dtype=float), (lines,))
    hi = np.broadcast_to(np.asarray(upper, dtype=float), (lines,))
    vp = np.empty((n + 4, lines))
    vp[0] = lo
    vp[1] = lo
    vp[2:-2] = v
    vp[-2] = hi
    vp[-1] = hi
    out = PchipInterpolator(xp, vp, axis=0, extrapolate=False)(np.clip(x + delta, xp[0], xp[-1]))
    return out[:, 0] if squeeze else out


@dataclass
class JumpGenerator1D:
    """Assembled action of one idiosyncratic jump generator on one axis."""

    grid: Grid1D
    spec: object
    compensator: float
    kind: str  # 'merton' | 'exp'

    def apply_generator(self, values, lower=0.0, upper=None):
        raise NotImplementedError


class MertonOperator1D(JumpGenerator1D):
    """One-axis Merton jump exponential over a fixed substep dt.

    apply() realizes exp(dt * J) as w_0 * shift + sum_k w_k * (Gaussian kernel
    with mean k*mu - dt*c); the matrix part is entrywise nonnegative and rows
    sum to one up to the kernel truncation.
    """

    def __init__(self, grid: Grid1D, spec: MertonJumps, dt):
        super().__init__(grid, spec, spec.compensator(1.0), "merton")
        self.dt = float(dt)
        x = grid.log_nodes
        self.x = x
        self.shift = -self.dt * self.compensator
        w = poisson_weights(spec.intensity * self.dt)
        self.w0 = w[0]
        n = x.size
        self.matrix = np.zeros((n, n))
        self.below = np.zeros(n)
        self.above = np.zeros(n)
        span = x[-1] - x[0]
        for k in range(1, w.size):
            mean = k * spec.mean + self.shift
            sd = spec.stdev * math.sqrt(k)
            if sd == 0.0:
                raise ConfigError("Merton stdev must be positive for the jump step")
            if w[k] >= 1e-3 and abs(mean) > span:
                # a materially-weighted kernel centred beyond the grid: all its
                # mass would be read from the extension values
                raise ConfigError(
                    "jump kernel wider than the grid span; extend the jump grid")
            wk, below, above = gaussian_hat_weights(x, mean, sd)
            self.matrix += w[k] * wk
            self.below += w[k] * below
            self.above += w[k] * above
        # narrow kernels leave most of the matrix empty: keep the apply cost
        # linear in N by switching to sparse storage
        nnz = int(np.count_nonzero(self.matrix))
        if nnz < 0.4 * n * n:
            from scipy.sparse import csr_matrix

            self.matrix = csr_matrix(self.matrix)

    def apply(self, values, lower=0.0, upper="edge"):
        """Advance lines of shape (n,) or (n, lines) by one substep.

        ``lower`` is the absorbed-state value below the barrier (scalar or per
        line); ``upper`` defaults to the constant extension of the top value.
        """
        v = np.asarray(values, dtype=float)
        up = v[-1] if isinstance(upper, str) and upper == "edge" else upper
        out = self.w0 * _shift_pchip(self.x, v, self.shift, lower, up)
        out += self.matrix @ v
        lower_zero = np.isscalar(lower) and lower == 0.0
        if not lower_zero and np.any(self.below):
            lo = lower if np.isscalar(lower) else np.asarray(lower)
            out += self.below * lo if v.ndim == 1 else self.below[:, None] * lo
        if np.any(self.above):
            uv = up if np.isscalar(up) else np.asarray(up)
            out += self.above * uv if v.ndim == 1 else self.above[:, None] * uv
        return out

    def apply_generator(self, values, lower=0.0, upper="edge"):
        """J f: intensity * (one-jump average - f) - compensator * f'."""
        v = np.asarray(values, dtype=float)
        up = v[-1] if isinstance(upper, str) and upper == "edge" else upper
        w, below, above = gaussian_hat_weights(self.x, self.spec.mean, self.spec.stdev)
        avg = w @ v + below * lower + above * up
        d = derivative_matrix(self.x, "C")
        return self.spec.intensity * (avg - v) - self.compensator * d.apply(v)


class ExpJumpOperator1D(JumpGenerator1D):
    """Banded scheme for one-sided exponential jumps on the asset grid.

    Negative variant: J = [lam/(phi+1)] (phi I + a B2)^{-1} a^2 C2; the
    positive variant mirrors it with (phi I - a F2) and denominator phi - 1.
    """

    def __init__(self, grid: Grid1D, spec: ExpJumps, em_check=True):
        super().__init__(grid, spec, spec.compensator(1.0), "exp")
        a = grid.nodes
        phi = spec.rate
        if spec.sign < 0:
            one_sided = derivative_matrix(grid, "B2", closure="ghost")
            self.m_op = one_sided.row_scaled(a).plus_identity(phi)
            self.denom = phi + 1.0
        else:
            one_sided = derivative_matrix(grid, "F2", closure="interior")
            self.m_op = one_sided.row_scaled(-a).plus_identity(phi)
            self.denom = phi - 1.0
        c2 = derivative_matrix(grid, "C2", closure="ghost")
        self.c2_op = c2.row_scaled(a * a)
        self.coef = spec.intensity / self.denom
        self._m_lu = self.m_op.factor()
        self._pade = {}
        if em_check:
            self._structural_check()

    def _structural_check(self):
        """-J must be an EM-matrix on a small diagnostic assembly."""
        a0 = float(self.grid.nodes[0])
        diag = Grid1D(a0 * np.exp(np.linspace(0.0, 1.5, 25)), kind="diffusion")
        probe = ExpJumpOperator1D(diag, self.spec, em_check=False)
        j = probe.dense()
        eigs = np.linalg.eigvals(j)
        if np.max(eigs.real) > 1e-9:
            raise ConfigError(
                "exponential-jump generator failed the spectral check "
                f"(max Re eig = {np.max(eigs.real):.2e})")
        report = check_em_matrix(-j)
        self.structural_report = report

    def dense(self):
        """Dense generator (diagnostic sizes only)."""
        m = self.m_op.to_dense()
        c2 = self.c2_op.to_dense()
        return self.coef * np.linalg.solve(m, c2)

    def apply_generator(self, values, lower=0.0, upper=None):
        v = np.asarray(values, dtype=float)
        rhs = self.c2_op.apply(v, ghost_lo_values=lower, ghost_hi_values=upper)
        return self.coef * self._m_lu.solve(rhs)

    def step_matrices(self, dtau, pin=(False, False), scheme="pade"):
        """Factored one-step pair for a time step of size dtau.

        Pade(1,1): [M -+ w a^2 C2] Q_new = [M +- w a^2 C2] Q_old with
        w = intensity * dtau / (2 * denom).  The ``euler`` scheme is the
        Pade(0,1) (implicit Euler) variant used as a Rannacher startup: it
        damps the high-frequency content of indicator-like data that the
        trapezoidal step would reflect into oscillations.  Pinned rows become
        identity rows of the left matrix so Dirichlet data does not pollute
        neighbours through the solve.
        """
        key = (float(dtau), pin, scheme)
        if key not in self._pade:
            if scheme == "pade":
                w = 0.5 * dtau * self.spec.intensity / self.denom
                lhs = self.m_op.plus(self.c2_op, -w)
                rhs = self.m_op.plus(self.c2_op, +w)
            elif scheme == "euler":
                w = dtau * self.spec.intensity / self.denom
                lhs = self.m_op.plus(self.c2_op, -w)
                rhs = self.m_op.copy()
            else:
                raise ConfigError(f"unknown time scheme {scheme!r}")
            if pin[0]:
                _pin_row(lhs, 0)
            if pin[1]:
                _pin_row(lhs, lhs.n - 1)
            self._pade[key] = (lhs.factor(), rhs, lhs)
        return self._pade[key]

    def step(self, values, dtau, lower=0.0, upper=None, pin=None, scheme="pade"):
        """One time step; `pin` optionally fixes the (bottom, top) rows."""
        pin_mask = (False, False) if pin is None else (pin[0] is not None, pin[1] is not None)
        lu, rhs_op, lhs_op = self.step_matrices(dtau, pin_mask, scheme)
        v = np.asarray(values, dtype=float)
        rhs = rhs_op.apply(v, ghost_lo_values=lower, ghost_hi_values=upper)
        # ghost terms of the left matrix act on known (time-independent)
        # absorbed / extension values: move them across
        if lhs_op.ghost_lo is not None and lower is not None:
            coefs = lhs_op.ghost_lo.sum(axis=1)
            for r, c in enumerate(coefs):
                if c != 0.0 and not (pin_mask[0] and r == 0):
                    rhs[r] -= c * (lower if np.isscalar(lower) else np.asarray(lower))
        if lhs_op.ghost_hi is not None and upper is not None:
            coefs = lhs_op.ghost_hi.sum(axis=1)
            base = lhs_op.n - lhs_op.ghost_hi.shape[0]
            uval = upper if np.isscalar(upper) else np.asarray(upper)
            for r, c in enumerate(coefs):
                if c != 0.0 and not (pin_mask[1] and base + r == lhs_op.n - 1):
                    rhs[base + r] -= c * uval
        if pin is not None and pin[0] is not None:
            rhs[0] = pin[0]
        if pin is not None and pin[1] is not None:
            rhs[-1] = pin[1]
        return lu.solve(rhs)


def merton_step(values, op: MertonOperator1D, lower=0.0, upper="edge"):
    """Apply one Merton substep to a field laid out as (n,) or (n, lines)."""
    return op.apply(values, lower=lower, upper=upper)


def exp_jump_generator(grid: Grid1D, spec: ExpJumps) -> ExpJumpOperator1D:
    if spec.intensity < 0:
        raise ConfigError("intensity must be nonnegative")
    return ExpJumpOperator1D(grid, spec)


def exp_jump_step(values, gen: ExpJumpOperator1D, dtau, lower=0.0, upper=None, pin=None):
    return gen.step(values, dtau, lower=lower, upper=upper, pin=pin)
