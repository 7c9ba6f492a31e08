"""Domain model: banks, mutual liabilities, barriers, correlation structure.

Asset dynamics per bank: exponential Levy process with a diffusion part
(constant or local volatility), idiosyncratic jumps, and a loading on one
common jump factor shared by all banks.  All liability-type quantities grow
with a deterministic growth factor; default happens when the asset crosses a
liability-derived barrier that carries a kink at maturity and jumps up when a
counterparty defaults.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ConfigError, DegenerateInputError, DomainError


# --------------------------------------------------------------------------
# rates and growth
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RateCurve:
    """Piecewise-constant forward rates r(t).

    ``rates[k]`` applies on ``[knots[k], knots[k+1])``; the last rate extends
    to infinity.  ``knots[0]`` must be 0.
    """

    knots: tuple = (0.0,)
    rates: tuple = (0.0,)

    def __post_init__(self):
        knots = tuple(float(k) for k in self.knots)
        rates = tuple(float(r) for r in self.rates)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "rates", rates)
        if len(knots) != len(rates):
            raise ConfigError("rate curve needs one rate per knot")
        if len(knots) == 0 or knots[0] != 0.0:
            raise ConfigError("rate curve knots must start at 0")
        if any(b <= a for a, b in zip(knots, knots[1:])):
            raise ConfigError("rate curve knots must be strictly increasing")
        if not all(math.isfinite(r) for r in rates):
            raise ConfigError("rates must be finite")

    @classmethod
    def flat(cls, r):
        return cls((0.0,), (float(r),))

    def integral(self, t):
        """Exact integral of r over [0, t]."""
        if t < 0:
            raise DomainError("time must be nonnegative")
        total = 0.0
        for k, (a, r) in enumerate(zip(self.knots, self.rates)):
            b = self.knots[k + 1] if k + 1 < len(self.knots) else math.inf
            if t <= a:
                break
            total += r * (min(t, b) - a)
        return total

    def value(self, t):
        if t < 0:
            raise DomainError("time must be nonnegative")
        idx = 0
        for k, a in enumerate(self.knots):
            if t >= a:
                idx = k
        return self.rates[idx]

    def integral_at(self, t):
        """Vectorized exact integral of r over [0, t] (piecewise linear in t)."""
        t = np.asarray(t, dtype=float)
        knots = np.asarray(self.knots)
        rates = np.asarray(self.rates)
        cum = np.concatenate([[0.0], np.cumsum(rates[:-1] * np.diff(knots))])
        idx = np.clip(np.searchsorted(knots, t, side="right") - 1, 0, knots.size - 1)
        return cum[idx] + rates[idx] * (t - knots[idx])


def growth_factor(rate: RateCurve, t) -> float:
    """G_t = exp(integral of the forward rate over [0, t])."""
    return math.exp(rate.integral(t))


# --------------------------------------------------------------------------
# jump specifications
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class MertonJumps:
    """Compound Poisson with Gaussian jump sizes N(mean, stdev^2)."""

    intensity: float
    mean: float
    stdev: float

    def __post_init__(self):
        if self.intensity < 0:
            raise ConfigError("jump intensity must be >= 0")
        if self.stdev < 0:
            raise ConfigError("jump stdev must be >= 0")

    def cumulant(self, u):
        """kappa(u) per unit time: intensity * (E[e^{uJ}] - 1)."""
        return self.intensity * (math.exp(self.mean * u + 0.5 * (self.stdev * u) ** 2) - 1.0)

    def compensator(self, loading=1.0):
        return self.cumulant(loading)

    def variance(self):
        return self.intensity * (self.mean**2 + self.stdev**2)


@dataclass(frozen=True)
class KouJumps:
    """Double-exponential jumps: +Exp(theta1) w.p. p, -Exp(theta2) w.p. 1-p."""

    intensity: float
    p: float
    theta1: float
    theta2: float

    def __post_init__(self):
        if self.intensity < 0:
            raise ConfigError("jump intensity must be >= 0")
        if not (0.0 < self.p < 1.0):
            raise ConfigError("Kou mixing weight p must lie in (0, 1)")
        if self.theta1 <= 1.0:
            raise ConfigError("Kou theta1 must exceed 1 (finite asset expectation)")
        if self.theta2 <= 0.0:
            raise ConfigError("Kou theta2 must be positive")

    def cumulant(self, u):
        if not (-self.theta2 < u < self.theta1):
            raise DomainError(f"Kou cumulant undefined at u={u}: need -theta2 < u < theta1")
        return self.intensity * (
            self.p * self.theta1 / (self.theta1 - u)
            + (1.0 - self.p) * self.theta2 / (self.theta2 + u)
            - 1.0
        )

    def compensator(self, loading=1.0):
        return self.cumulant(loading)

    def variance(self):
        return self.intensity * 2.0 * (
            self.p / self.theta1**2 + (1.0 - self.p) / self.theta2**2
        )


@dataclass(frozen=True)
class ExpJumps:
    """One-sided exponential jumps with |J| ~ Exp(rate).

    ``sign=-1`` (default) gives negative jumps; ``sign=+1`` the positive
    variant, which requires rate > 1 so the asset keeps a finite expectation.
    """

    intensity: float
    rate: float
    sign: int = -1

    def __post_init__(self):
        if self.intensity < 0:
            raise ConfigError("jump intensity must be >= 0")
        if self.rate <= 0:
            raise ConfigError("exponential jump rate must be positive")
        if self.sign not in (-1, 1):
            raise ConfigError("exponential jump sign must be -1 or +1")
        if self.sign > 0 and self.rate <= 1.0:
            raise ConfigError("positive exponential jumps need rate > 1")

    def cumulant(self, u):
        if self.sign < 0:
            if u <= -self.rate:
                raise DomainError("cumulant undefined: u <= -rate")
            return self.intensity * (self.rate / (self.rate + u) - 1.0)
        if u >= self.rate:
            raise DomainError("cumulant undefined: u >= rate")
        return self.intensity * (self.rate / (self.rate - u) - 1.0)

    def compensator(self, loading=1.0):
        return self.cumulant(loading)

    def variance(self):
        return self.intensity * 2.0 / self.rate**2


@dataclass(frozen=True)
class NoJumps:
    intensity: float = 0.0

    def cumulant(self, u):
        return 0.0

    def compensator(self, loading=1.0):
        return 0.0

    def variance(self):
        return 0.0


JumpSpec = Union[MertonJumps, KouJumps, ExpJumps, NoJumps]


# --------------------------------------------------------------------------
# volatility
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LocalVolTable:
    """sigma(t, A) on a rectangular grid; bilinear inside, flat outside."""

    times: np.ndarray
    assets: np.ndarray
    vols: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        assets = np.asarray(self.assets, dtype=float)
        vols = np.asarray(self.vols, dtype=float)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "assets", assets)
        object.__setattr__(self, "vols", vols)
        if times.size == 0 or assets.size == 0:
            raise ConfigError("local vol table must not be empty")
        if np.any(np.diff(times) <= 0) or np.any(np.diff(assets) <= 0):
            raise ConfigError("local vol grids must be strictly increasing")
        if vols.shape != (times.size, assets.size):
            raise ConfigError("local vol matrix shape must be (len(times), len(assets))")
        if np.any(vols <= 0):
            raise ConfigError("all local vols must be positive")

    def __eq__(self, other):
        return (
            isinstance(other, LocalVolTable)
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.assets, other.assets)
            and np.array_equal(self.vols, other.vols)
        )


def local_vol(table: LocalVolTable, t, a):
    """Bilinear interpolation of sigma(t, A) with flat extrapolation."""
    t_grid, a_grid, v = table.times, table.assets, table.vols
    t = np.clip(t, t_grid[0], t_grid[-1])
    a = np.asarray(a, dtype=float)
    a_cl = np.clip(a, a_grid[0], a_grid[-1])
    it = min(np.searchsorted(t_grid, t, side="right") - 1, t_grid.size - 2) if t_grid.size > 1 else 0
    it = max(it, 0)
    ia = np.clip(np.searchsorted(a_grid, a_cl, side="right") - 1, 0, max(a_grid.size - 2, 0))
    if t_grid.size == 1:
        wt = 0.0
        it1 = it
    else:
        it1 = it + 1
        wt = (t - t_grid[it]) / (t_grid[it1] - t_grid[it])
    if a_grid.size == 1:
        wa = np.zeros_like(a_cl)
        ia1 = ia
    else:
        ia1 = ia + 1
        wa = (a_cl - a_grid[ia]) / (a_grid[ia1] - a_grid[ia])
    v00 = v[it, ia]
    v01 = v[it, ia1]
    v10 = v[it1, ia]
    v11 = v[it1, ia1]
    out = (1 - wt) * ((1 - wa) * v00 + wa * v01) + wt * ((1 - wa) * v10 + wa * v11)
    return out if out.ndim else float(out)


# --------------------------------------------------------------------------
# banks, liabilities, correlation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BankSpec:
    """One bank: initial external assets/liabilities, recovery, volatility."""

    a0: float
    l0: float
    recovery: float
    vol: Union[float, LocalVolTable]

    def __post_init__(self):
        if self.a0 <= 0:
            raise ConfigError("initial asset value must be positive")
        if self.l0 < 0:
            raise ConfigError("external liabilities must be >= 0")
        if not (0.0 <= self.recovery <= 1.0):
            raise ConfigError("recovery must lie in [0, 1]")
        if isinstance(self.vol, (int, float)) and self.vol <= 0:
            raise ConfigError("constant volatility must be positive")

    def vol_at(self, t, a):
        if isinstance(self.vol, LocalVolTable):
            return local_vol(self.vol, t, a)
        return self.vol

    @property
    def max_vol(self):
        if isinstance(self.vol, LocalVolTable):
            return float(np.max(self.vol.vols))
        return float(self.vol)


@dataclass(frozen=True)
class LiabilityMatrix:
    """l[i, j] = amount owed by bank i to bank j at t = 0."""

    l: np.ndarray

    def __post_init__(self):
        l = np.asarray(self.l, dtype=float)
        object.__setattr__(self, "l", l)
        if l.ndim != 2 or l.shape[0] != l.shape[1]:
            raise ConfigError("liability matrix must be square")
        if np.any(np.diag(l) != 0.0):
            raise ConfigError("liability matrix diagonal must be zero")
        if np.any(l < 0):
            raise ConfigError("liabilities must be >= 0")

    def __eq__(self, other):
        return isinstance(other, LiabilityMatrix) and np.array_equal(self.l, other.l)

    @classmethod
    def zero(cls, n):
        return cls(np.zeros((n, n)))

    def owed_by(self, i):
        """Total bank i owes to the others."""
        return float(np.sum(self.l[i, :]))

    def owed_to(self, i):
        """Total the others owe to bank i."""
        return float(np.sum(self.l[:, i]))


@dataclass(frozen=True)
class CorrelationSpec:
    """Diffusion correlation matrix, common-jump loadings, common jump factor."""

    rho: np.ndarray
    loadings: tuple
    common: JumpSpec = field(default_factory=NoJumps)

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=float)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "loadings", tuple(float(b) for b in self.loadings))
        n = rho.shape[0]
        if rho.shape != (n, n):
            raise ConfigError("correlation matrix must be square")
        if not np.allclose(rho, rho.T, atol=1e-12):
            raise ConfigError("correlation matrix must be symmetric")
        if not np.allclose(np.diag(rho), 1.0, atol=1e-12):
            raise ConfigError("correlation matrix diagonal must be 1")
        if np.min(np.linalg.eigvalsh((rho + rho.T) / 2)) < -1e-10:
            raise ConfigError("correlation matrix must be positive semidefinite")
        if len(self.loadings) != n:
            raise ConfigError("need one loading per bank")
        if isinstance(self.common, KouJumps):
            for b in self.loadings:
                # integral defining the common-jump generator exists only here
                if not (-self.common.theta2 < b < self.common.theta1):
                    raise ConfigError(
                        f"loading {b} violates -theta2 < b < theta1 existence condition")

    def __eq__(self, other):
        return (
            isinstance(other, CorrelationSpec)
            and np.array_equal(self.rho, other.rho)
            and self.loadings == other.loadings
            and self.common == other.common
        )

    @classmethod
    def independent(cls, n):
        return cls(np.eye(n), (0.0,) * n, NoJumps())


@dataclass(frozen=True)
class Portfolio:
    """Full scenario: banks, mutual liabilities, correlations, jumps, horizon.

    ``barrier_growth`` defaults to the discounting curve, which makes the
    default barriers constant in growth-discounted coordinates; a different
    curve (e.g. flat zero) reproduces fixed-barrier test setups.
    """

    banks: tuple
    liabilities: LiabilityMatrix
    corr: CorrelationSpec
    idio_jumps: tuple
    rate: RateCurve
    maturity: float
    barrier_growth: Optional[RateCurve] = None

    def __post_init__(self):
        object.__setattr__(self, "banks", tuple(self.banks))
        object.__setattr__(self, "idio_jumps", tuple(self.idio_jumps))
        n = len(self.banks)
        if n not in (1, 2, 3):
            raise ConfigError("supported portfolio sizes are 1, 2 or 3 banks")
        if self.liabilities.l.shape[0] != n:
            raise ConfigError("liability matrix size must match number of banks")
        if self.corr.rho.shape[0] != n:
            raise ConfigError("correlation size must match number of banks")
        if len(self.idio_jumps) != n:
            raise ConfigError("need one idiosyncratic jump spec per bank")
        if self.maturity <= 0:
            raise ConfigError("maturity must be positive")

    @property
    def n(self):
        return len(self.banks)

    @property
    def growth(self) -> RateCurve:
        """Curve the barriers and liabilities grow with."""
        return self.barrier_growth if self.barrier_growth is not None else self.rate

    # -- barrier levels in t=0 (growth-discounted) units ------------------

    def barrier_base(self, i):
        """lambda_i(0): pre-maturity barrier level at t = 0."""
        bank = self.banks[i]
        return bank.recovery * (bank.l0 + self.liabilities.owed_by(i)) - self.liabilities.owed_to(i)

    def maturity_barrier_base(self, i):
        """Barrier level at t = T (the kink), discounted back to t = 0 units."""
        bank = self.banks[i]
        return bank.l0 + self.liabilities.owed_by(i) - self.liabilities.owed_to(i)

    def raised_barrier_base(self, survivor, defaulter, at_maturity=False):
        """Post-counterparty-default barrier in t=0 units.

        Built from the adjusted external liabilities
        L~ = L - R_d * L_{d,s} + L_{s,d}; the growth ratio G_t / G_tau of the
        time-of-default definition cancels in discounted units.
        """
        s, d = survivor, defaulter
        bank = self.banks[s]
        ltilde = (
            bank.l0
            - self.banks[d].recovery * self.liabilities.l[d, s]
            + self.liabilities.l[s, d]
        )
        return ltilde if at_maturity else bank.recovery * ltilde

    def total_drift_adjustment(self, i):
        """Sum of jump compensators entering bank i's log-asset drift."""
        c = self.idio_jumps[i].compensator(1.0)
        b = self.corr.loadings[i]
        if b != 0.0:
            c += self.corr.common.compensator(b)
        return c


def default_barrier(bank, portfolio: Portfolio, t, at_maturity=False):
    """Barrier level lambda_bank(t) in currency; negative values allowed."""
    if not (0.0 <= t <= portfolio.maturity + 1e-12):
        raise DomainError("barrier time must lie in [0, T]")
    g = growth_factor(portfolio.growth, t)
    base = (
        portfolio.maturity_barrier_base(bank)
        if at_maturity
        else portfolio.barrier_base(bank)
    )
    return base * g


def barrier_jump_on_default(portfolio: Portfolio, survivor, defaulter, tau):
    """Barrier increase of the survivor at the defaulter's default time.

    Delta lambda = (1 - R_s R_d) L_{defaulter,survivor}(tau) >= 0.
    """
    if survivor == defaulter:
        raise DomainError("survivor and defaulter must differ")
    g = growth_factor(portfolio.growth, tau)
    r_s = portfolio.banks[survivor].recovery
    r_d = portfolio.banks[defaulter].recovery
    return (1.0 - r_s * r_d) * portfolio.liabilities.l[defaulter, survivor] * g


def instantaneous_correlation(portfolio: Portfolio, i, j):
    """Instantaneous correlation of the log-assets of banks i and j."""
    if i == j:
        return 1.0
    b = portfolio.corr.loadings
    var_z = portfolio.corr.common.variance()
    s_i = portfolio.banks[i].vol_at(0.0, portfolio.banks[i].a0)
    s_j = portfolio.banks[j].vol_at(0.0, portfolio.banks[j].a0)
    var_xi = portfolio.idio_jumps[i].variance() + b[i] ** 2 * var_z
    var_xj = portfolio.idio_jumps[j].variance() + b[j] ** 2 * var_z
    denom = math.sqrt(s_i**2 + var_xi) * math.sqrt(s_j**2 + var_xj)
    if denom <= 0.0:
        raise DegenerateInputError("zero total variance: correlation undefined")
    return (portfolio.corr.rho[i, j] * s_i * s_j + b[i] * b[j] * var_z) / denom


def correlation_cosine_law(rho_yz, rho_xz, phi_xy):
    """Complete a 3-asset correlation from two correlations and one angle."""
    if abs(rho_yz) > 1 or abs(rho_xz) > 1:
        raise DomainError("correlations must lie in [-1, 1]")
    val = rho_yz * rho_xz + math.sqrt((1 - rho_yz**2) * (1 - rho_xz**2)) * math.cos(phi_xy)
    return min(1.0, max(-1.0, val))


def netted_scenario(portfolio: Portfolio) -> Portfolio:
    """Absorb mutual liabilities into the external ones, then zero them out."""
    banks = []
    for i, bank in enumerate(portfolio.banks):
        l_new = bank.l0 - portfolio.liabilities.owed_by(i)
        if l_new < 0:
            warnings.warn(
                f"netted external liability of bank {i} is negative ({l_new:g}); clamping to 0")
            l_new = 0.0
        banks.append(replace(bank, l0=l_new))
    return replace(
        portfolio,
        banks=tuple(banks),
        liabilities=LiabilityMatrix.zero(portfolio.n),
    )
