"""Discrete derivative operators on non-uniform grids, banded storage, EM checks.

Kinds follow the one-sided/central stencil family used by the jump and ADI
schemes: F, B (first-order one-sided), C (central), F2, B2 (second-order
one-sided three-point) for d/dx, and C2 = F @ B for d2/dx2.  On a uniform grid
they reduce bit-for-bit to the classical stencils, e.g. F2 -> [-3, 4, -1]/(2h)
and B2 -> [3, -4, 1]/(2h).

Boundary closure comes in two flavours:

* ``interior``: rows that would reach past the grid fall back to a lower-order
  stencil of the same direction, or to a zero row at the node with no upstream
  neighbour at all.  Every row annihilates constants, which keeps resolvent
  identities exact on free space.
* ``ghost``: the full stencil is kept; coefficients that hit ghost nodes
  (mirrored spacing outside the grid) are split off into ``ghost_lo`` /
  ``ghost_hi`` so callers can feed the absorbed state below the barrier or a
  constant extension above the top through the right-hand side.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .errors import ConfigError
from .grids import Grid1D

KINDS = ("F", "B", "C", "F2", "B2", "C2")

_BANDS = {"F": (0, 1), "B": (1, 0), "C": (1, 1), "F2": (0, 2), "B2": (2, 0), "C2": (1, 1)}


@dataclass
class OperatorMatrix:
    """Banded matrix plus optional ghost-column coefficients.

    ``ghost_lo[r, g]`` multiplies the field value at ghost node ``x_{-1-g}``
    in row ``r``; ``ghost_hi[r, g]`` multiplies the value at ``x_{n+g}`` in
    row ``n - nrows + r``.  Band storage is the scipy convention
    ``ab[u + i - j, j] = A[i, j]``.
    """

    ab: np.ndarray
    l: int
    u: int
    kind: str
    coords: np.ndarray
    closure: str = "interior"
    ghost_lo: Optional[np.ndarray] = None
    ghost_hi: Optional[np.ndarray] = None

    @property
    def n(self):
        return self.ab.shape[1]

    def diag(self, d):
        """Array v with v[i] = A[i, i + d] (zeros where out of range)."""
        n = self.n
        v = np.zeros(n)
        if -self.l <= d <= self.u:
            i0, i1 = max(0, -d), min(n, n - d)
            idx = np.arange(i0, i1)
            v[idx] = self.ab[self.u - d, idx + d]
        return v

    def apply(self, v, ghost_lo_values=None, ghost_hi_values=None):
        """A @ v for v of shape (n,) or (n, lines), plus ghost contributions.

        Ghost values default to zero (the absorbed state).  Scalars or
        per-line arrays realise constant extensions and marginal boundary
        data.
        """
        v = np.asarray(v, dtype=float)
        y = kernels.banded_matvec(self.l, self.u, self.ab, v)
        if self.ghost_lo is not None and ghost_lo_values is not None:
            coefs = self.ghost_lo.sum(axis=1)
            for r, c in enumerate(coefs):
                if c != 0.0:
                    y[r] += c * ghost_lo_values if np.isscalar(ghost_lo_values) \
                        else c * np.asarray(ghost_lo_values)
        if self.ghost_hi is not None and ghost_hi_values is not None:
            coefs = self.ghost_hi.sum(axis=1)
            base = self.n - self.ghost_hi.shape[0]
            for r, c in enumerate(coefs):
                if c != 0.0:
                    y[base + r] += c * ghost_hi_values if np.isscalar(ghost_hi_values) \
                        else c * np.asarray(ghost_hi_values)
        return y

    def to_dense(self):
        a = np.zeros((self.n, self.n))
        for i in range(self.n):
            for j in range(max(0, i - self.l), min(self.n, i + self.u + 1)):
                a[i, j] = self.ab[self.u + i - j, j]
        return a

    def factor(self):
        return kernels.BandedLU(self.l, self.u, self.ab)

    # -- small algebra for assembling scheme matrices ----------------------

    def copy(self):
        return OperatorMatrix(
            self.ab.copy(), self.l, self.u, self.kind, self.coords, self.closure,
            None if self.ghost_lo is None else self.ghost_lo.copy(),
            None if self.ghost_hi is None else self.ghost_hi.copy())

    def scaled(self, c):
        out = self.copy()
        out.ab = out.ab * c
        if out.ghost_lo is not None:
            out.ghost_lo = out.ghost_lo * c
        if out.ghost_hi is not None:
            out.ghost_hi = out.ghost_hi * c
        return out

    def row_scaled(self, d):
        """diag(d) @ A."""
        d = np.asarray(d, dtype=float)
        out = self.copy()
        n, u = self.n, self.u
        for r in range(out.ab.shape[0]):
            cols = np.arange(n)
            rows = cols - (u - r)  # A-row feeding ab[r, col]
            valid = (rows >= 0) & (rows < n)
            out.ab[r, valid] *= d[rows[valid]]
        if out.ghost_lo is not None:
            out.ghost_lo = out.ghost_lo * d[: out.ghost_lo.shape[0], None]
        if out.ghost_hi is not None:
            nr = out.ghost_hi.shape[0]
            out.ghost_hi = out.ghost_hi * d[n - nr:, None]
        return out

    def plus(self, other, c=1.0):
        """self + c * other, widening the band as needed."""
        l, u = max(self.l, other.l), max(self.u, other.u)
        n = self.n
        ab = np.zeros((l + u + 1, n))
        ab[u - self.u: u + self.l + 1, :] += self.ab
        ab[u - other.u: u + other.l + 1, :] += c * other.ab
        glo = _merge_ghost(self.ghost_lo, other.ghost_lo, c, align="top")
        ghi = _merge_ghost(self.ghost_hi, other.ghost_hi, c, align="bottom")
        return OperatorMatrix(ab, l, u, "mix", self.coords, self.closure, glo, ghi)

    def plus_identity(self, c):
        out = self.copy()
        out.ab[out.u, :] += c
        return out


def _merge_ghost(a, b, c, align):
    if a is None and b is None:
        return None
    rows = max(x.shape[0] for x in (a, b) if x is not None)
    cols = max(x.shape[1] for x in (a, b) if x is not None)
    out = np.zeros((rows, cols))
    for block, w in ((a, 1.0), (b, c)):
        if block is None:
            continue
        r, k = block.shape
        if align == "top":
            out[:r, :k] += w * block
        else:
            out[rows - r:, :k] += w * block
    return out


def pin_dirichlet_row(op: OperatorMatrix, row):
    """Turn one row into an identity row (Dirichlet data enters via the RHS)."""
    for j in range(max(0, row - op.l), min(op.n, row + op.u + 1)):
        op.ab[op.u + row - j, j] = 1.0 if j == row else 0.0


def identity_like(x, l=0, u=0):
    x = np.asarray(x, dtype=float)
    ab = np.zeros((l + u + 1, x.size))
    ab[u, :] = 1.0
    return OperatorMatrix(ab, l, u, "I", x)


def _coords(grid, coords):
    if isinstance(grid, Grid1D):
        return grid.log_nodes if coords == "log" else grid.nodes
    return np.asarray(grid, dtype=float)


def _one_sided_weights(g1, g2):
    """Weights for f'(x0) from values at x0, x0+g1, x0+g1+g2."""
    a = -(2 * g1 + g2) / (g1 * (g1 + g2))
    b = (g1 + g2) / (g1 * g2)
    c = -g1 / (g2 * (g1 + g2))
    return a, b, c


def _build_interior(x, kind):
    n = x.size
    h = np.diff(x)
    l, u = _BANDS[kind]
    ab = np.zeros((l + u + 1, n))

    def put(i, j, val):
        ab[u + i - j, j] = val

    if kind == "F":
        for i in range(n - 1):
            put(i, i, -1.0 / h[i])
            put(i, i + 1, 1.0 / h[i])
        # last row: no forward neighbour
    elif kind == "B":
        for i in range(1, n):
            put(i, i, 1.0 / h[i - 1])
            put(i, i - 1, -1.0 / h[i - 1])
    elif kind == "C":
        for i in range(1, n - 1):
            hm, hp = h[i - 1], h[i]
            put(i, i - 1, -hp / (hm * (hm + hp)))
            put(i, i, (hp - hm) / (hm * hp))
            put(i, i + 1, hm / (hp * (hm + hp)))
        put(0, 0, -1.0 / h[0])
        put(0, 1, 1.0 / h[0])
        put(n - 1, n - 1, 1.0 / h[-1])
        put(n - 1, n - 2, -1.0 / h[-1])
    elif kind == "F2":
        for i in range(n - 2):
            a, b, c = _one_sided_weights(h[i], h[i + 1])
            put(i, i, a)
            put(i, i + 1, b)
            put(i, i + 2, c)
        put(n - 2, n - 2, -1.0 / h[-1])
        put(n - 2, n - 1, 1.0 / h[-1])
        # last row zero
    elif kind == "B2":
        for i in range(2, n):
            a, b, c = _one_sided_weights(h[i - 1], h[i - 2])
            put(i, i, -a)
            put(i, i - 1, -b)
            put(i, i - 2, -c)
        put(1, 1, 1.0 / h[0])
        put(1, 0, -1.0 / h[0])
        # first row zero
    else:
        raise AssertionError(kind)
    return OperatorMatrix(ab, l, u, kind, x, "interior")


def derivative_matrix(grid, kind, coords="asset", closure="interior"):
    """Banded discretization of d/dx (C2: d2/dx2) on a non-uniform grid.

    ``grid`` may be a Grid1D (``coords`` selects asset or log coordinates) or
    a plain coordinate array.
    """
    if kind not in KINDS:
        raise ConfigError(f"unknown operator kind {kind!r}; expected one of {KINDS}")
    if closure not in ("interior", "ghost"):
        raise ConfigError(f"unknown closure {closure!r}")
    x = _coords(grid, coords)
    if x.size < 3:
        raise ConfigError("operators need at least 3 nodes")

    if closure == "interior":
        if kind == "C2":
            out = banded_product(_build_interior(x, "F"), _build_interior(x, "B"))
            out.kind = "C2"
            return out
        return _build_interior(x, kind)

    # ghost closure: build on a 2-ghost extended grid, keep the middle rows
    h0, hn = x[1] - x[0], x[-1] - x[-2]
    xe = np.concatenate([[x[0] - 2 * h0, x[0] - h0], x, [x[-1] + hn, x[-1] + 2 * hn]])
    if kind == "C2":
        me = banded_product(_build_interior(xe, "F"), _build_interior(xe, "B"))
    else:
        me = _build_interior(xe, kind)
    return _restrict_ghost(me, x, kind)


def _restrict_ghost(me, x, kind):
    """Slice the 2-ghost extended operator back onto the core grid."""
    n = x.size
    d = me.to_dense()[2: 2 + n, :]
    core = d[:, 2: 2 + n]
    lo_block = d[:, [1, 0]]           # ghost order: x_{-1}, x_{-2}
    hi_block = d[:, [2 + n, 3 + n]]   # ghost order: x_{n}, x_{n+1}
    l, u = _BANDS[kind]
    ab = np.zeros((l + u + 1, n))
    for i in range(n):
        for j in range(max(0, i - l), min(n, i + u + 1)):
            ab[u + i - j, j] = core[i, j]
    nr_lo = int(np.max(np.nonzero(np.any(lo_block != 0.0, axis=1))[0]) + 1) \
        if np.any(lo_block) else 0
    nr_hi_rows = np.nonzero(np.any(hi_block != 0.0, axis=1))[0]
    nr_hi = int(n - np.min(nr_hi_rows)) if nr_hi_rows.size else 0
    ghost_lo = lo_block[:nr_lo].copy() if nr_lo else None
    ghost_hi = hi_block[n - nr_hi:].copy() if nr_hi else None
    return OperatorMatrix(ab, l, u, kind, x, "ghost", ghost_lo, ghost_hi)


def banded_product(A: OperatorMatrix, B: OperatorMatrix):
    """Banded product A @ B (ghost-free operands)."""
    n = A.n
    l, u = A.l + B.l, A.u + B.u
    ab = np.zeros((l + u + 1, n))
    for da in range(-A.l, A.u + 1):
        av = A.diag(da)
        for db in range(-B.l, B.u + 1):
            e = da + db
            i0 = max(0, -e, -da)
            i1 = min(n, n - e, n - da)
            if i1 <= i0:
                continue
            idx = np.arange(i0, i1)
            ab[u - e, idx + e] += av[idx] * B.diag(db)[idx + da]
    return OperatorMatrix(ab, l, u, "prod", A.coords, A.closure)


def solve_banded(M, rhs):
    """Solve M x = rhs for a banded OperatorMatrix (or (l, u, ab) triple)."""
    if isinstance(M, OperatorMatrix):
        return kernels.solve_banded(M.l, M.u, M.ab, rhs)
    l, u, ab = M
    return kernels.solve_banded(l, u, ab, rhs)


# --------------------------------------------------------------------------
# EM-matrix structural checks
# --------------------------------------------------------------------------

@dataclass
class MatrixPropertyReport:
    """Outcome of the EM-matrix decomposition search for one matrix."""

    is_metzler: bool
    is_eventually_nonnegative: Optional[bool]
    spectral_radius_bound: float
    is_em_matrix: Optional[bool]
    s: Optional[float] = None
    rho_b: Optional[float] = None
    power_index: Optional[int] = None
    convergence_factor: Optional[float] = None


def _eventually_nonnegative(b, cap, tol=1e-11):
    """True if some power B^k, and every later one up to `cap`, is >= -tol.

    Powers are renormalized to dodge over/underflow; a vanishing power means
    B is nilpotent, which passes trivially.
    """
    scale = np.max(np.abs(b))
    if scale == 0.0:
        return True, 0
    bn = b / scale
    p = bn.copy()
    k0 = None
    for k in range(1, cap + 1):
        if np.min(p) >= -tol * max(np.max(np.abs(p)), 1e-300):
            if k0 is None:
                k0 = k
        else:
            k0 = None
        m = np.max(np.abs(p))
        if m == 0.0:
            return True, k if k0 is None else k0
        p = (p / m) @ bn
    return (k0 is not None), (k0 if k0 is not None else cap)


def appendix_convergence_factor(s, theta, b, h):
    """Closed-form iteration-factor estimate (s - t/2 + 3b/h)/(s + t/2 - 3b/h)."""
    return (s - theta / 2.0 + 3.0 * b / h) / (s + theta / 2.0 - 3.0 * b / h)


def check_em_matrix(M, s=None, powers_cap=None, size_cap=200, context=None):
    """Verify M = sI - B with B eventually nonnegative and 0 < rho(B) < s.

    Candidate shifts are searched when ``s`` is not supplied.  Matrices above
    ``size_cap`` get a partial report (Gershgorin spectral bound only).  An
    optional ``context`` dict (s, theta, b, h) adds the closed-form ADI
    convergence-factor estimate to the report.
    """
    a = M.to_dense() if isinstance(M, OperatorMatrix) else np.asarray(M, dtype=float)
    n = a.shape[0]
    off = a - np.diag(np.diag(a))
    is_metzler = bool(np.min(off) >= -1e-12)
    gersh = float(np.max(np.sum(np.abs(a), axis=1)))
    conv = None
    if context is not None:
        conv = appendix_convergence_factor(
            context["s"], context["theta"], context["b"], context["h"])
    if n > size_cap:
        return MatrixPropertyReport(is_metzler, None, gersh, None, convergence_factor=conv)

    cap = powers_cap if powers_cap is not None else 2 * n
    diag = np.diag(a)
    spread = max(float(np.max(np.abs(a))), 1.0)
    candidates = [s] if s is not None else [
        float(np.max(diag)) + 1e-2 * spread,
        float(np.max(diag)) + 0.5 * spread,
        gersh + 1e-2 * spread,
    ]
    last = None
    for s_try in candidates:
        b = s_try * np.eye(n) - a
        rho = float(np.max(np.abs(np.linalg.eigvals(b))))
        ok, k0 = _eventually_nonnegative(b, cap)
        last = (s_try, rho, ok, k0)
        if ok and 0.0 < rho < s_try:
            return MatrixPropertyReport(
                is_metzler, True, rho, True, s=s_try, rho_b=rho, power_index=k0,
                convergence_factor=conv)
    s_try, rho, ok, k0 = last
    return MatrixPropertyReport(
        is_metzler, ok, rho, False, s=s_try, rho_b=rho, power_index=k0,
        convergence_factor=conv)
