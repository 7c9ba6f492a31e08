"""Independent verification: closed forms, Monte Carlo, dense matrix references.

The Monte Carlo engine simulates every jump epoch exactly (exponential
inter-arrival structure drawn per factor), applies a Brownian-bridge
non-crossing correction to the diffusion part of each inter-event segment,
and keeps the growth-discounted log-asset exact for piecewise-constant rates.
In joint mode the estimator is the smooth product of bridge non-crossing
probabilities; in marginal mode crossings are sampled so the counterparty
default time is definite and the survivor's barrier can jump up and cascade.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm
from scipy.stats import norm

from .errors import ConfigError, DomainError
from .grids import Grid1D
from .model import (
    ExpJumps,
    KouJumps,
    MertonJumps,
    NoJumps,
    Portfolio,
    RateCurve,
)
from .operators import derivative_matrix

_DENSE_NODE_CAP = 2500


# --------------------------------------------------------------------------
# closed form: 1D pure-diffusion survival
# --------------------------------------------------------------------------

def analytic_survival_diffusion_1d(a0, barrier0, sigma, r, maturity, barrier_growth_rate=None):
    """Survival of a single diffusing asset against a growing barrier.

    The barrier grows at the discounting rate by default, so in discounted
    log coordinates the drift is nu = -sigma^2/2 and

        P = Phi((-beta + nu T)/(sigma sqrt(T)))
            - exp(2 nu beta / sigma^2) Phi((beta + nu T)/(sigma sqrt(T)))

    with beta = ln(barrier0/a0) < 0.  A different barrier growth rate adds
    (r - g) to the drift (used by fixed-barrier validation setups).
    """
    if sigma <= 0:
        raise DomainError("volatility must be positive")
    if maturity <= 0:
        raise DomainError("maturity must be positive")
    if a0 <= barrier0:
        return 0.0
    if barrier0 <= 0:
        return 1.0
    g = r if barrier_growth_rate is None else barrier_growth_rate
    nu = (r - g) - 0.5 * sigma * sigma
    beta = math.log(barrier0 / a0)
    srt = sigma * math.sqrt(maturity)
    return float(
        norm.cdf((-beta + nu * maturity) / srt)
        - math.exp(2.0 * nu * beta / (sigma * sigma)) * norm.cdf((beta + nu * maturity) / srt)
    )


# --------------------------------------------------------------------------
# Monte Carlo first passage
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class McConfig:
    paths: int
    steps_per_year: int = 50
    seed: int = 0
    antithetic: bool = False
    batch_size: int = 8192

    def __post_init__(self):
        if self.paths < 1:
            raise ConfigError("need at least one path")
        if self.steps_per_year < 12:
            raise ConfigError("steps_per_year must be at least 12")


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    paths: int


def _poisson_slots(lam_t):
    """Slot count covering Poisson(lam_t) up to ~1e-12 tail mass."""
    if lam_t <= 0:
        return 0
    return int(lam_t + 10.0 * math.sqrt(lam_t) + 12)


def _sample_kou(spec: KouJumps, u_mix, u_size):
    """Inverse-CDF sampling of one Kou jump from two uniforms."""
    up = u_mix < spec.p
    mag = -np.log1p(-u_size)
    return np.where(up, mag / spec.theta1, -mag / spec.theta2)


class _McProblem:
    """Precomputed, path-independent pieces of one MC configuration."""

    def __init__(self, pf: Portfolio, cfg: McConfig):
        self.pf = pf
        self.cfg = cfg
        self.n = pf.n
        self.T = pf.maturity
        knots = [k for k in (pf.rate.knots + pf.growth.knots) if 0.0 < k < self.T]
        base = np.linspace(0.0, self.T, max(int(round(cfg.steps_per_year * self.T)), 1) + 1)
        self.base_times = np.union1d(base, np.asarray(knots, dtype=float))
        self.chol = np.linalg.cholesky(pf.corr.rho + 1e-14 * np.eye(self.n))
        self.sigma_const = [
            float(b.vol) if isinstance(b.vol, (int, float)) else None for b in pf.banks
        ]
        self.compensators = np.array([pf.total_drift_adjustment(i) for i in range(self.n)])
        self.barrier_base = np.array([pf.barrier_base(i) for i in range(self.n)])
        self.maturity_base = np.array([pf.maturity_barrier_base(i) for i in range(self.n)])
        # jump factors: (kind, bank or None, spec, slots)
        self.factors = []
        common = pf.corr.common
        if isinstance(common, KouJumps) and common.intensity > 0 and any(pf.corr.loadings):
            self.factors.append(("common", None, common, _poisson_slots(common.intensity * self.T)))
        for i, spec in enumerate(pf.idio_jumps):
            if not isinstance(spec, NoJumps) and spec.intensity > 0:
                self.factors.append((
                    "idio", i, spec, _poisson_slots(spec.intensity * self.T)))

    def rate_minus_growth_integral(self, t):
        return self.pf.rate.integral_at(t) - self.pf.growth.integral_at(t)

    def growth_integral(self, t):
        return self.pf.growth.integral_at(t)


def _simulate_batch(prob: _McProblem, rng, npaths, mode, bank, flip=False):
    """One batch of paths; returns the per-path survival estimator.

    ``flip`` mirrors the Gaussian draws and reflects the uniform draws for the
    antithetic variate; jump counts and times are redrawn identically by
    construction (the generator stream is shared by the caller).
    """
    pf, cfg, n, T = prob.pf, prob.cfg, prob.n, prob.T

    # --- jump schedule ----------------------------------------------------
    slot_times = []
    slot_incr = []  # per bank
    for kind, i, spec, slots in prob.factors:
        if slots == 0:
            continue
        counts = rng.poisson(spec.intensity * T, size=npaths)
        counts = np.minimum(counts, slots)
        t = rng.random((npaths, slots)) * T
        mask = np.arange(slots)[None, :] < counts[:, None]
        t = np.where(mask, t, T)
        if kind == "common":
            u_mix = rng.random((npaths, slots))
            u_size = rng.random((npaths, slots))
            if flip:
                u_mix, u_size = 1.0 - u_mix, 1.0 - u_size
            z = _sample_kou(spec, u_mix, np.clip(u_size, 1e-16, 1 - 1e-16))
            incr = np.zeros((n, npaths, slots))
            for j in range(n):
                incr[j] = pf.corr.loadings[j] * z * mask
        else:
            if isinstance(spec, MertonJumps):
                g = rng.standard_normal((npaths, slots))
                if flip:
                    g = -g
                size = spec.mean + spec.stdev * g
            elif isinstance(spec, ExpJumps):
                u = rng.random((npaths, slots))
                if flip:
                    u = 1.0 - u
                size = spec.sign * (-np.log1p(-np.clip(u, 1e-16, 1 - 1e-16))) / spec.rate
            else:
                raise ConfigError(f"unsupported idiosyncratic jump spec {spec!r}")
            incr = np.zeros((n, npaths, slots))
            incr[i] = size * mask
        slot_times.append(t)
        slot_incr.append(incr)

    base = np.broadcast_to(prob.base_times, (npaths, prob.base_times.size))
    if slot_times:
        times = np.concatenate([base] + slot_times, axis=1)
        incr = np.concatenate(
            [np.zeros((n, npaths, prob.base_times.size))] + slot_incr, axis=2)
        order = np.argsort(times, axis=1, kind="stable")
        times = np.take_along_axis(times, order, axis=1)
        incr = np.stack([
            np.take_along_axis(incr[j], order, axis=1) for j in range(n)])
    else:
        times = np.array(base)
        incr = np.zeros((n, npaths, prob.base_times.size))

    m = times.shape[1]
    dt = np.diff(times, axis=1)
    gauss = rng.standard_normal((npaths, m - 1, n))
    if flip:
        gauss = -gauss
    eps = gauss @ prob.chol.T
    if mode == "marginal":
        u_cross = rng.random((npaths, m - 1, n))
        if flip:
            u_cross = 1.0 - u_cross

    drift_rg = prob.rate_minus_growth_integral(times)  # cumulative r - g
    growth_int = prob.growth_integral(times)

    # state: growth-discounted log assets
    w = np.tile(np.log([b.a0 for b in pf.banks]), (npaths, 1))
    has_barrier = prob.barrier_base > 0.0
    log_bar = np.where(has_barrier, np.log(np.where(has_barrier, prob.barrier_base, 1.0)), -np.inf)

    if mode == "joint":
        xi = np.ones(npaths)
        alive = np.ones(npaths, dtype=bool)
    else:
        alive = np.ones((npaths, n), dtype=bool)
        # per-path adjusted external liabilities and live-counterparty sets
        l_ext = np.tile(np.array([b.l0 for b in pf.banks]), (npaths, 1))
        log_bar_path = np.tile(log_bar, (npaths, 1))
        mat_base_path = np.tile(prob.maturity_base, (npaths, 1))

    recov = np.array([b.recovery for b in pf.banks])
    liab = pf.liabilities.l

    def sigma_at(j, t_val, w_col):
        bank_obj = pf.banks[j]
        if isinstance(bank_obj.vol, (int, float)):
            return float(bank_obj.vol)
        assets = np.exp(w_col + prob.growth_integral(np.asarray(t_val)))
        return bank_obj.vol_at(float(np.atleast_1d(t_val)[0]), assets)

    def recompute_barriers(paths_idx):
        """Refresh per-path barrier bases after defaults (marginal mode).

        Mutual liabilities with dead counterparties are settled into the
        adjusted externals; only live ones still enter the barrier formula.
        """
        a = alive[paths_idx].astype(float)
        for j in range(n):
            owed_by_j = a @ liab[j]       # live counterparties bank j still owes
            owed_to_j = a @ liab[:, j]
            lam = recov[j] * (l_ext[paths_idx, j] + owed_by_j) - owed_to_j
            mat = l_ext[paths_idx, j] + owed_by_j - owed_to_j
            log_bar_path[paths_idx, j] = np.where(lam > 0, np.log(np.maximum(lam, 1e-300)), -np.inf)
            mat_base_path[paths_idx, j] = mat

    for s in range(m - 1):
        d = dt[:, s]
        active = d > 0
        t0 = times[:, s]
        t1 = times[:, s + 1]
        mu_rg = drift_rg[:, s + 1] - drift_rg[:, s]
        w_new = w.copy()
        for j in range(n):
            sig = sigma_at(j, t0, w[:, j]) if prob.sigma_const[j] is None else prob.sigma_const[j]
            sig = np.asarray(sig, dtype=float)
            dw = mu_rg - (0.5 * sig**2 + prob.compensators[j]) * d \
                + sig * np.sqrt(np.maximum(d, 0.0)) * eps[:, s, j]
            w_new[:, j] = w[:, j] + np.where(active, dw, 0.0)
            bar_j = log_bar[j] if mode == "joint" else None
            if mode == "joint":
                if not has_barrier[j]:
                    continue
                d0 = w[:, j] - bar_j
                d1 = w_new[:, j] - bar_j
                ok = (d0 > 0) & (d1 > 0)
                with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
                    var = sig**2 * np.where(active, d, 1.0)
                    pc = np.exp(-2.0 * d0 * d1 / var)
                seg = np.where(ok, 1.0 - np.minimum(pc, 1.0), 0.0)
                seg = np.where(active, seg, np.where(ok, 1.0, 0.0))
                xi = np.where(alive, xi * seg, xi)
                alive &= seg > 0.0
            else:
                bj = log_bar_path[:, j]
                monitored = np.isfinite(bj)
                d0 = w[:, j] - bj
                d1 = w_new[:, j] - bj
                endpoint_dead = (d1 <= 0) & monitored
                with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
                    var = sig**2 * np.where(active, d, 1.0)
                    pc = np.where((d0 > 0) & (d1 > 0), np.exp(-2.0 * d0 * d1 / var), 1.0)
                bridge_dead = active & monitored & (u_cross[:, s, j] < pc)
                newly = alive[:, j] & (endpoint_dead | bridge_dead)
                alive[newly, j] = False
        # jumps land at the segment end
        jump_any = np.zeros(npaths, dtype=bool)
        for j in range(n):
            inc = incr[j][:, s + 1]
            hit = inc != 0.0
            if np.any(hit):
                w_new[hit, j] += inc[hit]
                jump_any |= hit
        if mode == "joint":
            for j in range(n):
                if not has_barrier[j]:
                    continue
                dead = jump_any & (w_new[:, j] <= log_bar[j])
                xi = np.where(alive & dead, 0.0, xi)
                alive &= ~dead
        else:
            for j in range(n):
                dead = alive[:, j] & np.isfinite(log_bar_path[:, j]) \
                    & (w_new[:, j] <= log_bar_path[:, j])
                alive[dead, j] = False
            # contagion: settle defaults, raise survivors' barriers, cascade
            changed = np.nonzero(~alive.all(axis=1))[0]
            if changed.size:
                for _ in range(n):
                    a_f = alive[changed].astype(float)
                    # adjusted externals: l0 - sum_dead R_k L[k, b] + sum_dead L[b, k]
                    dead_f = 1.0 - a_f
                    l_ext[changed] = np.array([b.l0 for b in pf.banks])[None, :] \
                        - dead_f @ (recov[:, None] * liab) + dead_f @ liab.T
                    recompute_barriers(changed)
                    cascade = alive[changed] & np.isfinite(log_bar_path[changed]) \
                        & (w_new[changed] <= log_bar_path[changed])
                    if not np.any(cascade):
                        break
                    al = alive[changed]
                    al[cascade] = False
                    alive[changed] = al
        w = w_new

    # terminal condition at T against the maturity (kink) level
    if mode == "joint":
        for j in range(n):
            mb = prob.maturity_base[j]
            if mb > 0:
                xi = np.where(w[:, j] > math.log(mb), xi, 0.0)
        return xi
    mb = mat_base_path[:, bank]
    ok = np.where(mb > 0, w[:, bank] > np.log(np.maximum(mb, 1e-300)), True)
    return (alive[:, bank] & ok).astype(float)


def mc_survival(portfolio: Portfolio, mode="joint", bank=0, cfg: McConfig = None) -> McEstimate:
    """First-passage survival estimate; see the module docstring for the scheme."""
    if cfg is None:
        cfg = McConfig(paths=100_000)
    if mode not in ("joint", "marginal"):
        raise ConfigError("mode must be 'joint' or 'marginal'")
    prob = _McProblem(portfolio, cfg)
    total = 0.0
    total_sq = 0.0
    done = 0
    batch_idx = 0
    unit_count = 0
    while done < cfg.paths:
        want = min(cfg.batch_size, cfg.paths - done)
        rng = np.random.Generator(np.random.Philox(
            key=np.array([cfg.seed & 0xFFFFFFFFFFFFFFFF, batch_idx], dtype=np.uint64)))
        if cfg.antithetic:
            half = max(want // 2, 1)
            state = rng.bit_generator.state
            xi_a = _simulate_batch(prob, rng, half, mode, bank, flip=False)
            rng.bit_generator.state = state
            xi_b = _simulate_batch(prob, rng, half, mode, bank, flip=True)
            xi = 0.5 * (xi_a + xi_b)
            done += 2 * half
            unit_count += half
        else:
            xi = _simulate_batch(prob, rng, want, mode, bank, flip=False)
            done += want
            unit_count += want
        total += float(np.sum(xi))
        total_sq += float(np.sum(xi * xi))
        batch_idx += 1
    mean = total / unit_count
    var = max(total_sq / unit_count - mean * mean, 0.0)
    stderr = math.sqrt(var / unit_count)
    return McEstimate(mean=mean, stderr=stderr, paths=done)


def mc_survival_profile(portfolio: Portfolio, a0_values, cfg: McConfig) -> list:
    """1D survival at many initial asset levels sharing one path skeleton.

    Only for single-bank portfolios with constant volatility: the driver is
    simulated from zero once and each level shifts the barrier, which makes
    the 20-level regression run at the cost of one.
    """
    if portfolio.n != 1:
        raise ConfigError("profile mode supports single-bank portfolios")
    bank_obj = portfolio.banks[0]
    if not isinstance(bank_obj.vol, (int, float)):
        raise ConfigError("profile mode needs constant volatility")
    a0_values = np.asarray(a0_values, dtype=float)
    levels = a0_values.size
    prob = _McProblem(portfolio, cfg)
    base = prob.barrier_base[0]
    mat = prob.maturity_base[0]
    if base <= 0:
        raise ConfigError("profile mode needs a positive barrier")
    sig = float(bank_obj.vol)
    comp = prob.compensators[0]
    T = portfolio.maturity

    total = np.zeros(levels)
    total_sq = np.zeros(levels)
    done = 0
    batch_idx = 0
    while done < cfg.paths:
        want = min(cfg.batch_size, cfg.paths - done)
        rng = np.random.Generator(np.random.Philox(
            key=np.array([cfg.seed & 0xFFFFFFFFFFFFFFFF, batch_idx], dtype=np.uint64)))
        # jump schedule for the single idiosyncratic factor
        slot_times = []
        slot_sizes = []
        for kind, i, spec, slots in prob.factors:
            counts = np.minimum(rng.poisson(spec.intensity * T, size=want), slots)
            t = rng.random((want, slots)) * T
            mask = np.arange(slots)[None, :] < counts[:, None]
            t = np.where(mask, t, T)
            if kind == "common":
                size = _sample_kou(
                    spec, rng.random((want, slots)),
                    np.clip(rng.random((want, slots)), 1e-16, 1 - 1e-16))
                size = size * portfolio.corr.loadings[0]
            elif isinstance(spec, ExpJumps):
                u = np.clip(rng.random((want, slots)), 1e-16, 1 - 1e-16)
                size = spec.sign * (-np.log1p(-u)) / spec.rate
            elif isinstance(spec, MertonJumps):
                size = spec.mean + spec.stdev * rng.standard_normal((want, slots))
            else:
                raise ConfigError(f"unsupported jump spec {spec!r}")
            slot_times.append(t)
            slot_sizes.append(size * mask)
        base_times = np.broadcast_to(prob.base_times, (want, prob.base_times.size))
        if slot_times:
            times = np.concatenate([base_times] + slot_times, axis=1)
            sizes = np.concatenate(
                [np.zeros((want, prob.base_times.size))] + slot_sizes, axis=1)
            order = np.argsort(times, axis=1, kind="stable")
            times = np.take_along_axis(times, order, axis=1)
            sizes = np.take_along_axis(sizes, order, axis=1)
        else:
            times = np.array(base_times)
            sizes = np.zeros_like(times)
        m = times.shape[1]
        dt = np.diff(times, axis=1)
        eps = rng.standard_normal((want, m - 1))
        drift_rg = prob.rate_minus_growth_integral(times)

        # driver from 0; level shift y0 = ln(a0 / base)
        y0 = np.log(a0_values / base)  # (levels,)
        x = np.zeros(want)
        xi = np.ones((want, levels))
        alive = np.ones((want, levels), dtype=bool)
        for s in range(m - 1):
            d = dt[:, s]
            active = d > 0
            mu = (drift_rg[:, s + 1] - drift_rg[:, s]) - (0.5 * sig**2 + comp) * d
            x_new = x + np.where(active, mu + sig * np.sqrt(np.maximum(d, 0)) * eps[:, s], 0.0)
            d0 = x[:, None] + y0[None, :]
            d1 = x_new[:, None] + y0[None, :]
            ok = (d0 > 0) & (d1 > 0)
            with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
                pc = np.exp(-2.0 * d0 * d1 / (sig**2 * np.where(active, d, 1.0))[:, None])
            seg = np.where(ok, 1.0 - np.minimum(pc, 1.0), 0.0)
            seg = np.where(active[:, None], seg, np.where(ok, 1.0, 0.0))
            xi = np.where(alive, xi * seg, xi)
            alive &= seg > 0.0
            jump = sizes[:, s + 1]
            x_new = x_new + jump
            dead = (x_new[:, None] + y0[None, :]) <= 0.0
            xi = np.where(alive & dead, 0.0, xi)
            alive &= ~dead
            x = x_new
        thresh = math.log(mat / base) if mat > 0 else -np.inf
        xi = np.where((x[:, None] + y0[None, :]) > thresh, xi, 0.0)
        total += xi.sum(axis=0)
        total_sq += (xi * xi).sum(axis=0)
        done += want
        batch_idx += 1
    mean = total / done
    var = np.maximum(total_sq / done - mean * mean, 0.0)
    stderr = np.sqrt(var / done)
    return [McEstimate(float(mu), float(se), done) for mu, se in zip(mean, stderr)]


# --------------------------------------------------------------------------
# dense generator references
# --------------------------------------------------------------------------

def dense_expm(generator, dtau):
    """Exact (scaling-and-squaring) exponential of a dense generator."""
    return expm(dtau * np.asarray(generator, dtype=float))


def dense_merton_generator(x, spec: MertonJumps, lower="absorb", upper="edge", nquad=4001):
    """Quadrature assembly of the Merton jump generator on log nodes `x`.

    Independent of the convolution-series route: each row integrates the
    piecewise-linear interpolant against the jump density with Simpson
    weights, then subtracts the identity and compensator-derivative parts.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if n > _DENSE_NODE_CAP:
        raise ConfigError("dense reference capped at 2500 nodes")
    span = 8.0 * spec.stdev
    y = np.linspace(spec.mean - span, spec.mean + span, nquad)
    wq = np.ones(nquad)
    wq[1:-1:2] = 4.0
    wq[2:-1:2] = 2.0
    wq *= (y[1] - y[0]) / 3.0
    dens = np.exp(-0.5 * ((y - spec.mean) / spec.stdev) ** 2) / (
        spec.stdev * math.sqrt(2.0 * math.pi))
    pts = x[:, None] + y[None, :]
    idx = np.clip(np.searchsorted(x, pts) - 1, 0, n - 2)
    xl = x[idx]
    hseg = x[idx + 1] - x[idx]
    tfrac = np.clip((pts - xl) / hseg, 0.0, 1.0)
    w_right = tfrac
    w_left = 1.0 - tfrac
    below = pts < x[0]
    above = pts > x[-1]
    p = np.zeros((n, n))
    quad_w = wq * dens
    inside = ~(below | above)
    for i in range(n):
        row = np.zeros(n)
        wl = np.where(inside[i], w_left[i] * quad_w, 0.0)
        wr = np.where(inside[i], w_right[i] * quad_w, 0.0)
        np.add.at(row, idx[i], wl)
        np.add.at(row, idx[i] + 1, wr)
        if upper == "edge":
            row[n - 1] += np.sum(quad_w * above[i])
        if lower == "edge":
            row[0] += np.sum(quad_w * below[i])
        # 'absorb': mass below the grid reads 0 and is dropped
        p[i] = row
    d = _reference_first_derivative(x)
    comp = spec.compensator(1.0)
    return spec.intensity * (p - np.eye(n)) - comp * d


def _reference_first_derivative(x):
    """High-order d/dx for the dense reference.

    The compensator enters the series route as an exact translation; a
    second-order stencil here would dominate the comparison with O(h^2)
    dispersion, so uniform grids get the five-point fourth-order formula.
    """
    n = x.size
    h = np.diff(x)
    if n >= 7 and np.max(np.abs(h / h[0] - 1.0)) < 1e-12:
        step = h[0]
        d = np.zeros((n, n))
        for i in range(2, n - 2):
            d[i, i - 2: i + 3] = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / (12.0 * step)
        for i in (0, 1):
            d[i, i: i + 3] = np.array([-3.0, 4.0, -1.0]) / (2.0 * step)
        for i in (n - 2, n - 1):
            d[i, i - 2: i + 1] = np.array([1.0, -4.0, 3.0]) / (2.0 * step)
        return d
    return derivative_matrix(x, "C").to_dense()


def dense_expjump_generator(grid, spec: ExpJumps):
    """Dense assembly of the banded exponential-jump generator (same stencils,
    dense inverse instead of banded solves)."""
    if isinstance(grid, Grid1D):
        a = grid.nodes
    else:
        a = np.asarray(grid, dtype=float)
        grid = Grid1D(a)
    if a.size > _DENSE_NODE_CAP:
        raise ConfigError("dense reference capped at 2500 nodes")
    phi = spec.rate
    if spec.sign < 0:
        m = derivative_matrix(grid, "B2", closure="ghost").row_scaled(a).plus_identity(phi)
        denom = phi + 1.0
    else:
        m = derivative_matrix(grid, "F2", closure="interior").row_scaled(-a).plus_identity(phi)
        denom = phi - 1.0
    c2 = derivative_matrix(grid, "C2", closure="ghost").row_scaled(a * a)
    return (spec.intensity / denom) * np.linalg.solve(m.to_dense(), c2.to_dense())


def dense_kou_generator(axes, spec: KouJumps, loadings, paper_literal=False):
    """Dense tensor-grid assembly of the common Kou generator.

    Uses the same sign-adapted one-sided derivative matrices as the ADI path
    but inverts the resolvents densely (Kronecker assembly).
    """
    xs = [ax.log_nodes if isinstance(ax, Grid1D) else np.asarray(ax, float) for ax in axes]
    ntot = int(np.prod([x.size for x in xs]))
    if ntot > _DENSE_NODE_CAP:
        raise ConfigError("dense reference capped at 2500 nodes")
    dim = len(xs)

    def kron_axis(mat, axis):
        out = np.array([[1.0]])
        for a in range(dim):
            blk = mat if a == axis else np.eye(xs[a].size)
            out = np.kron(out, blk)
        return out

    a_plus = np.zeros((ntot, ntot))
    a_minus = np.zeros((ntot, ntot))
    for a, (x, b) in enumerate(zip(xs, loadings)):
        if b == 0.0:
            continue
        kind_p = "F2" if b > 0 else "B2"
        kind_m = "B2" if b > 0 else "F2"
        mp = derivative_matrix(x, kind_p, closure="interior" if kind_p == "F2" else "ghost")
        mm = derivative_matrix(x, kind_m, closure="interior" if kind_m == "F2" else "ghost")
        a_plus += b * kron_axis(mp.to_dense(), a)
        a_minus += b * kron_axis(mm.to_dense(), a)
    eye = np.eye(ntot)
    r_plus = spec.p * spec.theta1 * np.linalg.inv(spec.theta1 * eye - a_plus)
    r_minus = (1.0 - spec.p) * spec.theta2 * np.linalg.inv(spec.theta2 * eye + a_minus)
    if paper_literal:
        return spec.intensity * (r_plus + r_minus)
    return spec.intensity * (r_plus + r_minus - eye)


def kou_jump_quadrature(f, points, spec: KouJumps, loadings, nquad=20001):
    """Direct quadrature of the common-jump integral for an analytic field f.

    f maps stacked coordinates (dim, ...) to values; `points` is a tuple of
    coordinate arrays (meshgrid-style).  Returns intensity * E[f(x + b z) - f(x)].
    """
    zmax = 40.0 / min(spec.theta1, spec.theta2)
    z = np.linspace(-zmax, zmax, nquad)
    wq = np.ones(nquad)
    wq[1:-1:2] = 4.0
    wq[2:-1:2] = 2.0
    wq *= (z[1] - z[0]) / 3.0
    dens = np.where(
        z >= 0, spec.p * spec.theta1 * np.exp(-spec.theta1 * z),
        (1.0 - spec.p) * spec.theta2 * np.exp(spec.theta2 * z))
    base = f(*points)
    out = -base * np.sum(wq * dens)
    for zk, wk in zip(z, wq * dens):
        shifted = [p + b * zk for p, b in zip(points, loadings)]
        out = out + wk * f(*shifted)
    return spec.intensity * out
