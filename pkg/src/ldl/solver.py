"""Backward-time Strang splitting: joint and marginal survival fields.

Coordinates: each axis carries the growth-discounted log asset of one bank, so
pre-maturity barriers are constant and sit at node 0 of the axis grid; the
maturity kink enters only through the terminal indicator, which is placed at
the (higher) maturity level and cell-averaged to keep second-order accuracy.

One time step runs the splitting sequence

    D/2 -> J_1/2 -> ... -> J_d/2 -> J_common -> J_d/2 -> ... -> J_1/2 -> D/2

with the convection-diffusion half-steps taken on the full jump grid so the
far tail carries the right drift for the jump integrals.  Boundary faces hold
Dirichlet data: zero on every barrier face and, on each upper face, the joint
survival of the remaining banks, solved recursively on the same axis grids and
time grid.  The marginal problem replaces the counterparty's barrier face by
the survivor's raised-barrier solution, which also feeds the jump operators'
absorbed-state ghost values along that axis.

The first `startup_steps` time steps use implicit-Euler variants of the jump
steps (Rannacher damping) so the indicator's high frequencies are not
reflected into oscillations by the trapezoidal Pade step.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .diffusion import HV_THETA_DEFAULT, DiffusionOperatorSet, SchemeParams, hv_half_step
from .errors import ConfigError
from .grids import Grid1D, GridSet, build_diffusion_grid, build_jump_grid
from .jumps_common import CommonJumpOperator, IterationControls, StepStats
from .jumps_idio import ExpJumpOperator1D, MertonOperator1D
from .model import ExpJumps, KouJumps, LiabilityMatrix, MertonJumps, NoJumps, Portfolio


@dataclass(frozen=True)
class NumericsConfig:
    """Grid and scheme parameters for one solve."""

    n: int = 100
    dtau: float = 0.01
    theta: float = HV_THETA_DEFAULT
    cluster_strength: float = 4.0
    domain_width: float = 6.0        # upper bound multiplier in sigma*sqrt(T) units
    jump_upper: float = 1e5
    jump_tail_nodes: int = 80
    smooth_terminal: bool = True
    startup_steps: int = 2
    controls: IterationControls = field(default_factory=IterationControls)
    s_plus: Optional[float] = None
    s_minus: Optional[float] = None
    paper_literal_j12: bool = False

    def __post_init__(self):
        if self.dtau <= 0:
            raise ConfigError("time step must be positive")
        if self.n < 8:
            raise ConfigError("need at least 8 diffusion nodes per axis")

    def n_axis(self, i):
        return self.n[i] if isinstance(self.n, (tuple, list)) else self.n

    def time_grid(self, maturity):
        steps = max(int(round(maturity / self.dtau)), 1)
        return steps, maturity / steps


@dataclass
class SurvivalField:
    """Probability values on the tensor jump grid at one backward-time slice."""

    gridset: GridSet
    values: np.ndarray
    tau: float

    @property
    def dim(self):
        return self.gridset.dim

    def value_at(self, *assets):
        """Multilinear interpolation in log coordinates at one point."""
        if len(assets) != self.dim:
            raise ConfigError("need one coordinate per axis")
        idx = []
        wts = []
        for grid, a in zip(self.gridset.jump, assets):
            x = grid.log_nodes
            v = math.log(a)
            j = int(np.clip(np.searchsorted(x, v) - 1, 0, x.size - 2))
            t = (v - x[j]) / (x[j + 1] - x[j])
            idx.append(j)
            wts.append(min(max(t, 0.0), 1.0))
        out = 0.0
        for corner in range(1 << self.dim):
            w = 1.0
            pos = []
            for d in range(self.dim):
                hi = (corner >> d) & 1
                w *= wts[d] if hi else 1.0 - wts[d]
                pos.append(idx[d] + hi)
            out += w * self.values[tuple(pos)]
        return float(out)

    def invariant_report(self, mono_tol=1e-9, tail_tol=5e-4):
        """Bounds, barrier-face zeros and monotonicity diagnostics.

        Monotonicity is held strictly on the diffusion region where results
        are reported; the geometric jump tail (integral support scaffolding)
        is allowed a small seam tolerance where the recursive upper-face data
        meets the interior discretization.
        """
        v = self.values
        core = v[tuple(slice(0, g.n_diffusion) for g in self.gridset.jump)]
        report = {
            "min": float(v.min()),
            "max": float(v.max()),
            "barrier_face_max": 0.0,
            "monotone_violation": 0.0,
            "tail_monotone_violation": 0.0,
        }
        for a in range(self.dim):
            face = np.take(v, 0, axis=a)
            report["barrier_face_max"] = max(report["barrier_face_max"],
                                             float(np.max(np.abs(face))))
            report["monotone_violation"] = max(
                report["monotone_violation"],
                float(-min(np.min(np.diff(core, axis=a)), 0.0)))
            report["tail_monotone_violation"] = max(
                report["tail_monotone_violation"],
                float(-min(np.min(np.diff(v, axis=a)), 0.0)))
        report["ok"] = (
            report["min"] >= -1e-9
            and report["max"] <= 1.0 + 1e-9
            and report["monotone_violation"] <= mono_tol
            and report["tail_monotone_violation"] <= tail_tol
        )
        return report


@dataclass
class RunStats:
    """Iteration counts and stage timings of one march."""

    picard_iterations: list = field(default_factory=list)
    adi_iterations: list = field(default_factory=list)
    adi_max_single: int = 0
    adi_max_steady: int = 0
    adi_bootstrap: int = 0
    deep_solves: int = 0
    timings: dict = field(default_factory=lambda: {
        "diffusion": 0.0, "idiosyncratic": 0.0, "common": 0.0})

    def merge(self, other):
        self.picard_iterations.extend(other.picard_iterations)
        self.adi_iterations.extend(other.adi_iterations)
        self.adi_max_single = max(self.adi_max_single, other.adi_max_single)
        self.adi_max_steady = max(self.adi_max_steady, other.adi_max_steady)
        self.adi_bootstrap = max(self.adi_bootstrap, other.adi_bootstrap)
        self.deep_solves += other.deep_solves
        for k in self.timings:
            self.timings[k] += other.timings[k]


def sub_portfolio(pf: Portfolio, banks):
    """Portfolio restricted to a subset of banks (mutual liabilities kept)."""
    banks = tuple(banks)
    idx = np.asarray(banks, dtype=int)
    return replace(
        pf,
        banks=tuple(pf.banks[i] for i in banks),
        liabilities=LiabilityMatrix(pf.liabilities.l[np.ix_(idx, idx)]),
        corr=replace(
            pf.corr,
            rho=pf.corr.rho[np.ix_(idx, idx)],
            loadings=tuple(pf.corr.loadings[i] for i in banks),
        ),
        idio_jumps=tuple(pf.idio_jumps[i] for i in banks),
    )


def raised_barrier_portfolio(pf: Portfolio, survivor, defaulter):
    """Single-bank portfolio for the survivor after the defaulter settles.

    The adjusted externals L~ = L - R_d L_{ds} + L_{sd} determine both the
    raised pre-maturity barrier R_s L~ and the raised maturity level; the
    growth-ratio factor of the time-of-default definition cancels in
    discounted coordinates.
    """
    s = survivor
    ltilde = (
        pf.banks[s].l0
        - pf.banks[defaulter].recovery * pf.liabilities.l[defaulter, s]
        + pf.liabilities.l[s, defaulter]
    )
    if ltilde < 0:
        ltilde = 0.0
    one = sub_portfolio(pf, (s,))
    return replace(one, banks=(replace(one.banks[0], l0=max(ltilde, 0.0)),))


def cell_average_indicator(x, threshold, smooth=True):
    """Indicator {x > threshold} projected onto dual cells (or raw)."""
    if not np.isfinite(threshold):
        return np.ones_like(x) if threshold == -np.inf else np.zeros_like(x)
    if not smooth:
        return (x > threshold).astype(float)
    mids = 0.5 * (x[:-1] + x[1:])
    lo = np.concatenate([[x[0] - 0.5 * (x[1] - x[0])], mids])
    hi = np.concatenate([mids, [x[-1] + 0.5 * (x[-1] - x[-2])]])
    frac = (hi - threshold) / (hi - lo)
    return np.clip(frac, 0.0, 1.0)


def build_axis_grids(pf: Portfolio, i, numerics: NumericsConfig):
    """Diffusion grid and jump superset for one bank's axis."""
    bank = pf.banks[i]
    base = pf.barrier_base(i)
    mat = pf.maturity_barrier_base(i)
    anchor = bank.a0
    sigma = max(bank.max_vol, 1e-4)
    t_half = math.sqrt(pf.maturity)
    width = math.exp(numerics.domain_width * sigma * t_half)
    if base <= 0.0:
        # non-defaultable before maturity: park the absorbing face far below
        base_eff = min(anchor, mat if mat > 0 else anchor) * math.exp(
            -2.0 * numerics.domain_width * sigma * t_half) / 4.0
    else:
        base_eff = base
    if anchor <= base_eff:
        raise ConfigError(
            f"initial asset {anchor:g} of bank {i} is at or below its barrier {base_eff:g}")
    upper = max(anchor, 1.05 * mat if mat > 0 else anchor) * width
    diff = build_diffusion_grid(
        base_eff, anchor, upper, numerics.n_axis(i), numerics.cluster_strength)
    has_jumps = (
        (not isinstance(pf.idio_jumps[i], NoJumps) and pf.idio_jumps[i].intensity > 0)
        or (isinstance(pf.corr.common, KouJumps) and pf.corr.common.intensity > 0
            and pf.corr.loadings[i] != 0.0)
    )
    if has_jumps and numerics.jump_tail_nodes > 0:
        jump_top = max(numerics.jump_upper, upper * math.e)
        jump = build_jump_grid(diff, jump_top, numerics.jump_tail_nodes)
    else:
        jump = Grid1D(diff.nodes, kind="jump", n_diffusion=diff.n)
    return diff, jump


class _March:
    """One splitting run on a fixed gridset with per-step boundary data."""

    def __init__(self, pf, numerics, grids, banks, faces, sub_barrier_fn=None):
        self.pf = pf
        self.numerics = numerics
        self.grids = grids  # list of (diff, jump) per axis, in `banks` order
        self.banks = banks
        self.faces = faces  # per axis: dict(lower=..., upper=...) scalars or (steps+1, ...)
        self.sub_barrier_fn = sub_barrier_fn
        self.dim = len(grids)
        self.shape = tuple(g[1].n for g in grids)
        self.steps, self.dtau = numerics.time_grid(pf.maturity)
        self.params = SchemeParams(theta=numerics.theta, dtau=self.dtau)
        self.stats = RunStats()
        sub = sub_portfolio(pf, banks)
        self.sub = sub

        # idiosyncratic jump operators per axis (half-step size)
        self.merton_ops = [None] * self.dim
        self.exp_ops = [None] * self.dim
        for a, spec in enumerate(sub.idio_jumps):
            jump_grid = grids[a][1]
            if isinstance(spec, MertonJumps) and spec.intensity > 0:
                self.merton_ops[a] = MertonOperator1D(jump_grid, spec, 0.5 * self.dtau)
            elif isinstance(spec, ExpJumps) and spec.intensity > 0:
                self.exp_ops[a] = ExpJumpOperator1D(jump_grid, spec)

        # common jump operator
        self.kou_op = None
        common = sub.corr.common
        if isinstance(common, KouJumps) and common.intensity > 0 and any(sub.corr.loadings):
            self.kou_op = CommonJumpOperator(
                [g[1] for g in grids], common, sub.corr.loadings,
                s_plus=numerics.s_plus, s_minus=numerics.s_minus,
                paper_literal=numerics.paper_literal_j12)

        # diffusion: constant-vol operators are frozen once
        self._const_vol = all(isinstance(b.vol, (int, float)) for b in sub.banks)
        self._dops_cache = None

    # -- coefficient assembly ------------------------------------------------

    def _diffusion_ops(self, t_mid):
        if self._const_vol and self._dops_cache is not None:
            return self._dops_cache
        sub = self.sub
        rg = sub.rate.value(max(t_mid, 0.0)) - sub.growth.value(max(t_mid, 0.0))
        drifts = []
        sigmas = []
        g_mid = math.exp(sub.growth.integral(max(t_mid, 0.0)))
        for a, bank in enumerate(sub.banks):
            jump_grid = self.grids[a][1]
            if isinstance(bank.vol, (int, float)):
                sig = np.full(jump_grid.n, float(bank.vol))
            else:
                sig = np.asarray(bank.vol_at(t_mid, jump_grid.nodes * g_mid), dtype=float)
            # idiosyncratic compensators live inside their jump steps (the
            # Merton shift, the exponential-jump resolvent); only the common
            # factor's per-axis drifts are folded into the convection term
            comp = 0.0
            if self.kou_op is not None:
                comp += self.kou_op.compensators[a]
            elif isinstance(sub.corr.common, KouJumps) and sub.corr.loadings[a] != 0.0:
                comp += sub.corr.common.compensator(sub.corr.loadings[a])
            drifts.append(rg - 0.5 * sig * sig - comp)
            sigmas.append(sig)
        dops = DiffusionOperatorSet(
            [g[1] for g in self.grids], drifts, sigmas,
            sub.corr.rho if self.dim > 1 else None)
        if self._const_vol:
            self._dops_cache = dops
        return dops

    # -- boundary data ---------------------------------------------------------

    def _face_value(self, axis, side, k):
        spec = self.faces[axis][side]
        if np.isscalar(spec):
            return spec
        return spec[k]

    def _install_faces(self, q, k):
        for axis in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[axis] = -1
            q[tuple(idx)] = self._face_value(axis, "upper", k)
        for axis in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[axis] = 0
            q[tuple(idx)] = self._face_value(axis, "lower", k)
        return q

    def _sub_barrier(self, k):
        if self.sub_barrier_fn is None:
            return None
        return self.sub_barrier_fn(k)

    # -- stepping ----------------------------------------------------------------

    def _idio_substep(self, q, axis, k, scheme):
        ghosts = self._sub_barrier(k)
        lower = 0.0 if ghosts is None or ghosts[axis] is None else ghosts[axis]
        if self.merton_ops[axis] is not None:
            op = self.merton_ops[axis]
            moved = np.moveaxis(q, axis, 0)
            flat = moved.reshape(moved.shape[0], -1)
            lo = lower if np.isscalar(lower) else np.asarray(lower).reshape(-1)
            out = op.apply(flat, lower=lo, upper="edge")
            return np.moveaxis(out.reshape(moved.shape), 0, axis)
        if self.exp_ops[axis] is not None:
            op = self.exp_ops[axis]
            moved = np.moveaxis(q, axis, 0)
            flat = moved.reshape(moved.shape[0], -1)
            lo = lower if np.isscalar(lower) else np.asarray(lower).reshape(-1)
            hi = self._face_value(axis, "upper", k)
            pin_lo = self._face_value(axis, "lower", k)
            out = op.step(flat, 0.5 * self.dtau, lower=lo, upper=None,
                          pin=(pin_lo, hi), scheme=scheme)
            return np.moveaxis(out.reshape(moved.shape), 0, axis)
        return q

    def run(self, terminal, keep_history=True):
        q = np.array(terminal, dtype=float)
        self._kou_warm = None
        self._install_faces(q, 0)
        history = np.empty((self.steps + 1,) + self.shape) if keep_history else None
        if keep_history:
            history[0] = q
        ctrl = self.numerics.controls
        for k in range(self.steps):
            scheme = "euler" if k < self.numerics.startup_steps else "pade"
            k_next = k + 1
            t_mid = self.pf.maturity - (k + 0.5) * self.dtau
            t0 = time.perf_counter()
            dops = self._diffusion_ops(t_mid)
            q = hv_half_step(q, dops, self.params)
            self._install_faces(q, k_next)
            self.stats.timings["diffusion"] += time.perf_counter() - t0

            t0 = time.perf_counter()
            for axis in range(self.dim):
                q = self._idio_substep(q, axis, k_next, scheme)
                self._install_faces(q, k_next)
            self.stats.timings["idiosyncratic"] += time.perf_counter() - t0

            if self.kou_op is not None:
                t0 = time.perf_counter()
                q, st, self._kou_warm = self.kou_op.step(
                    q, self.dtau, ctrl, sub_barrier=self._sub_barrier(k_next),
                    scheme=scheme, warm=self._kou_warm)
                self.stats.picard_iterations.append(st.picard_iterations)
                self.stats.adi_iterations.append(st.adi_iterations)
                self.stats.adi_max_single = max(self.stats.adi_max_single,
                                                st.adi_max_single)
                self.stats.adi_bootstrap = max(self.stats.adi_bootstrap,
                                               st.adi_bootstrap)
                self.stats.deep_solves += st.deep_solves
                if k >= self.numerics.startup_steps + 8:
                    self.stats.adi_max_steady = max(
                        self.stats.adi_max_steady, st.adi_max_single)
                self._install_faces(q, k_next)
                self.stats.timings["common"] += time.perf_counter() - t0

            t0 = time.perf_counter()
            for axis in reversed(range(self.dim)):
                q = self._idio_substep(q, axis, k_next, scheme)
                self._install_faces(q, k_next)
            self.stats.timings["idiosyncratic"] += time.perf_counter() - t0

            t0 = time.perf_counter()
            dops = self._diffusion_ops(t_mid)
            q = hv_half_step(q, dops, self.params)
            self._install_faces(q, k_next)
            self.stats.timings["diffusion"] += time.perf_counter() - t0

            if keep_history:
                history[k_next] = q
        return (history if keep_history else q), self.stats


class SolverSession:
    """Caches axis grids and recursive face solutions for one scenario."""

    def __init__(self, pf: Portfolio, numerics: NumericsConfig):
        self.pf = pf
        self.numerics = numerics
        self.axes = [build_axis_grids(pf, i, numerics) for i in range(pf.n)]
        self.steps, self.dtau = numerics.time_grid(pf.maturity)
        self._cache = {}
        self.stats = RunStats()

    # -- terminal data -------------------------------------------------------

    def _terminal_axis(self, i, maturity_base=None):
        grid = self.axes[i][1]
        mat = self.pf.maturity_barrier_base(i) if maturity_base is None else maturity_base
        threshold = math.log(mat) if mat > 0 else -np.inf
        return cell_average_indicator(
            grid.log_nodes, threshold, self.numerics.smooth_terminal)

    def _terminal_joint(self, banks):
        vecs = [self._terminal_axis(i) for i in banks]
        out = vecs[0]
        for v in vecs[1:]:
            out = np.multiply.outer(out, v)
        return out

    # -- recursive joint histories --------------------------------------------

    def joint_history(self, banks):
        banks = tuple(banks)
        key = ("joint", banks)
        if key in self._cache:
            return self._cache[key]
        dim = len(banks)
        faces = []
        for p, i in enumerate(banks):
            rest = banks[:p] + banks[p + 1:]
            upper = self.joint_history(rest) if rest else 1.0
            faces.append({"lower": 0.0, "upper": upper})
        march = _March(self.pf, self.numerics,
                       [self.axes[i] for i in banks], banks, faces)
        hist, stats = march.run(self._terminal_joint(banks))
        self.stats.merge(stats)
        self._cache[key] = hist
        return hist

    # -- marginal machinery -----------------------------------------------------

    def raised_barrier_history(self, survivor, defaulter):
        """Raised-barrier 1D solution interpolated onto the survivor's axis."""
        key = ("raised", survivor, defaulter)
        if key in self._cache:
            return self._cache[key]
        raised_pf = raised_barrier_portfolio(self.pf, survivor, defaulter)
        session = SolverSession(raised_pf, self.numerics)
        hist = session.joint_history((0,))
        self.stats.merge(session.stats)
        src = session.axes[0][1].log_nodes
        dst = self.axes[survivor][1].log_nodes
        barrier = src[0]
        out = np.empty((self.steps + 1, dst.size))
        for k in range(self.steps + 1):
            out[k] = np.interp(dst, src, hist[k], left=0.0, right=hist[k][-1])
            out[k][dst < barrier] = 0.0
        self._cache[key] = out
        return out

    def marginal_history(self, bank):
        if self.pf.n != 2:
            raise ConfigError("marginal fields with contagion are built for two banks")
        key = ("marginal", bank)
        if key in self._cache:
            return self._cache[key]
        other = 1 - bank
        raised = self.raised_barrier_history(bank, other)
        plain = self.joint_history((bank,))
        faces = [None, None]
        faces[bank] = {"lower": 0.0, "upper": 1.0}
        faces[other] = {"lower": raised, "upper": plain}
        terminal_vec = self._terminal_axis(bank)
        ones = np.ones(self.axes[other][1].n)
        if bank == 0:
            terminal = np.multiply.outer(terminal_vec, ones)
        else:
            terminal = np.multiply.outer(ones, terminal_vec)

        def sub_barrier_fn(k):
            ghosts = [None, None]
            ghosts[other] = raised[k]
            return tuple(ghosts)

        march = _March(self.pf, self.numerics,
                       [self.axes[i] for i in range(2)], (0, 1), faces,
                       sub_barrier_fn=sub_barrier_fn)
        hist, stats = march.run(terminal)
        self.stats.merge(stats)
        self._cache[key] = hist
        return hist

    # -- public fields -------------------------------------------------------

    def gridset(self, banks=None):
        banks = tuple(range(self.pf.n)) if banks is None else tuple(banks)
        return GridSet(tuple(self.axes[i][0] for i in banks),
                       tuple(self.axes[i][1] for i in banks))

    def joint_field(self):
        hist = self.joint_history(tuple(range(self.pf.n)))
        return SurvivalField(self.gridset(), hist[-1], self.pf.maturity)

    def marginal_field(self, bank):
        hist = self.marginal_history(bank)
        return SurvivalField(self.gridset(), hist[-1], self.pf.maturity)


def joint_survival(portfolio: Portfolio, numerics: NumericsConfig):
    """Joint survival field at tau = T (with its solver session for stats)."""
    session = SolverSession(portfolio, numerics)
    return session.joint_field(), session


def marginal_survival_2d(portfolio: Portfolio, numerics: NumericsConfig, bank=0):
    """Marginal survival of one bank with the counterparty-default barrier raise."""
    session = SolverSession(portfolio, numerics)
    return session.marginal_field(bank), session


def interpolate_to(field: SurvivalField, gridset: GridSet):
    """Resample a field onto another gridset (zero below its barrier faces)."""
    from scipy.interpolate import RegularGridInterpolator

    pts = [g.log_nodes for g in field.gridset.jump]
    rgi = RegularGridInterpolator(
        pts, field.values, bounds_error=False, fill_value=None, method="linear")
    mesh = np.meshgrid(*[g.log_nodes for g in gridset.jump], indexing="ij")
    coords = np.stack([np.clip(m, p[0], p[-1]) for m, p in zip(mesh, pts)], axis=-1)
    vals = rgi(coords)
    below = np.zeros(vals.shape, dtype=bool)
    for a, (m, p) in enumerate(zip(mesh, pts)):
        below |= m < p[0] - 1e-12
    vals[below] = 0.0
    return SurvivalField(gridset, vals, field.tau)


def delta_q(portfolio: Portfolio, numerics: NumericsConfig, kind="joint", bank=0):
    """Difference field Q(portfolio) - Q(netted portfolio) on the base grids.

    For the marginal kind the netted world has no contagion, so the netted
    marginal is the 1D survival broadcast along the counterparty axis.
    """
    from .model import netted_scenario

    netted = netted_scenario(portfolio)
    base_session = SolverSession(portfolio, numerics)
    net_session = SolverSession(netted, numerics)
    if kind == "joint":
        base = base_session.joint_field()
        net = net_session.joint_field()
        net_on_base = interpolate_to(net, base.gridset)
    elif kind == "marginal":
        base = base_session.marginal_field(bank)
        hist = net_session.joint_history((bank,))
        grid_1d = net_session.gridset((bank,))
        net1 = SurvivalField(grid_1d, hist[-1], portfolio.maturity)
        dst = base.gridset.jump[bank].log_nodes
        src = grid_1d.jump[0].log_nodes
        prof = np.interp(dst, src, net1.values, left=0.0, right=net1.values[-1])
        prof[dst < src[0]] = 0.0
        other = 1 - bank
        ones = np.ones(base.gridset.jump[other].n)
        vals = np.multiply.outer(prof, ones) if bank == 0 else np.multiply.outer(ones, prof)
        net_on_base = SurvivalField(base.gridset, vals, base.tau)
    else:
        raise ConfigError("kind must be 'joint' or 'marginal'")
    diff = SurvivalField(base.gridset, base.values - net_on_base.values, base.tau)
    return diff, base, net_on_base, base_session, net_session


def run_custom(portfolio: Portfolio, numerics: NumericsConfig, terminal,
               keep_history=False):
    """March an arbitrary terminal field with zero Dirichlet faces.

    Exists for convergence studies: smooth-terminal surrogates measure the
    temporal order of the full splitting without boundary-recursion effects.
    """
    session = SolverSession(portfolio, numerics)
    banks = tuple(range(portfolio.n))
    faces = [{"lower": 0.0, "upper": 0.0} for _ in banks]
    march = _March(portfolio, numerics, session.axes, banks, faces)
    out, stats = march.run(np.asarray(terminal, dtype=float), keep_history=keep_history)
    return out, session, stats


def run_3d(portfolio: Portfolio, numerics: NumericsConfig, slice_levels=None):
    """3D joint survival plus coordinate-plane slices for plotting parity."""
    if portfolio.n != 3:
        raise ConfigError("run_3d needs a three-bank portfolio")
    session = SolverSession(portfolio, numerics)
    fld = session.joint_field()
    slices = {}
    for axis in range(3):
        grid = fld.gridset.jump[axis]
        level = portfolio.banks[axis].a0 if slice_levels is None else slice_levels[axis]
        j = int(np.argmin(np.abs(grid.nodes - level)))
        slices[f"axis{axis}_at_{grid.nodes[j]:.6g}"] = np.take(fld.values, j, axis=axis)
    return fld, slices, session
