"""Spatial grids: sinh-clustered diffusion grids and geometric jump supersets.

Each axis carries two grids.  The diffusion grid spans [barrier, upper] with
nodes concentrated near the barrier and near the anchor (spot).  The jump grid
is the diffusion grid extended by a geometric progression up to a far bound so
the jump integrals can read values well above the diffusion domain; below the
barrier a short ghost-node pad represents the absorbed region.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigError

DEFAULT_CLUSTER_STRENGTH = 4.0


@dataclass(frozen=True)
class Grid1D:
    """Strictly increasing asset-space nodes; the barrier sits at node 0."""

    nodes: np.ndarray
    kind: str = "diffusion"
    barrier_index: int = 0
    n_diffusion: int = 0  # leading nodes shared with the diffusion grid
    pad: int = 2          # ghost nodes below the barrier (jump grids)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        if self.kind not in ("diffusion", "jump"):
            raise ConfigError(f"unknown grid kind {self.kind!r}")
        if nodes.ndim != 1 or nodes.size < 3:
            raise ConfigError("grid needs at least 3 nodes")
        if np.any(np.diff(nodes) <= 0):
            raise ConfigError("grid nodes must be strictly increasing")
        if nodes[0] <= 0:
            raise ConfigError("grid must live in positive asset space")
        if self.n_diffusion == 0:
            object.__setattr__(self, "n_diffusion", nodes.size)

    @property
    def n(self):
        return self.nodes.size

    @property
    def barrier(self):
        return float(self.nodes[self.barrier_index])

    @cached_property
    def log_nodes(self):
        return np.log(self.nodes)

    @cached_property
    def pad_log_nodes(self):
        """Ghost log-coordinates below the barrier, nearest first.

        Spacing mirrors the first grid cell; the field value there is the
        absorbed state (0 for joint problems, a supplied slice for marginal
        ones).
        """
        x = self.log_nodes
        h0 = x[1] - x[0]
        return x[0] - h0 * np.arange(1, self.pad + 1)

    def index_of(self, level, tol=1e-9):
        """Index of the node equal to `level` (within tol), or -1."""
        idx = int(np.argmin(np.abs(self.nodes - level)))
        if abs(self.nodes[idx] - level) <= tol * max(1.0, abs(level)):
            return idx
        return -1


def _two_center_sinh_nodes(barrier, anchor, upper, n, strength):
    """Nodes of a bounded-density map clustering at the barrier and anchor.

    Node density is 1 + strength * b(x - barrier) + strength/2 * b(x - anchor)
    with Lorentzian bumps b(u) = alpha^2/(alpha^2 + u^2), so the local
    refinement ratio is capped at 1 + 1.5 * strength (an unbounded sinh-type
    map drives the minimum spacing so small that the Peaceman-Rachford
    resolvent sweeps at s = theta + 1 stop contracting fast enough).  The
    cumulative is closed-form (arctan), inverted with safeguarded Newton.
    """
    alpha = (upper - barrier) / 16.0

    def cum(x):
        return (
            x
            + strength * alpha * np.arctan((x - barrier) / alpha)
            + 0.5 * strength * alpha * np.arctan((x - anchor) / alpha)
        )

    def dens(x):
        return (
            1.0
            + strength * alpha**2 / (alpha**2 + (x - barrier) ** 2)
            + 0.5 * strength * alpha**2 / (alpha**2 + (x - anchor) ** 2)
        )

    targets = np.linspace(cum(barrier), cum(upper), n)
    x = np.linspace(barrier, upper, n)  # initial guess
    lo = np.full(n, barrier)
    hi = np.full(n, upper)
    for _ in range(60):
        f = cum(x) - targets
        lo = np.where(f < 0, x, lo)
        hi = np.where(f > 0, x, hi)
        step = f / dens(x)
        x_new = x - step
        # bisection safeguard keeps iterates inside the bracket
        bad = (x_new <= lo) | (x_new >= hi)
        x_new = np.where(bad, 0.5 * (lo + hi), x_new)
        if np.max(np.abs(x_new - x)) < 1e-14 * (upper - barrier):
            x = x_new
            break
        x = x_new
    x[0] = barrier
    x[-1] = upper
    return x


def build_diffusion_grid(barrier, anchor, upper, n, cluster_strength=DEFAULT_CLUSTER_STRENGTH):
    """Diffusion grid on [barrier, upper] clustered near the barrier and anchor."""
    if not (0.0 < barrier < anchor < upper):
        raise ConfigError("need 0 < barrier < anchor < upper")
    if n < 8:
        raise ConfigError("diffusion grid needs at least 8 nodes")
    if cluster_strength < 0:
        raise ConfigError("cluster strength must be >= 0")
    if cluster_strength == 0.0:
        nodes = barrier + np.arange(n) * ((upper - barrier) / (n - 1))
        nodes[-1] = upper
    else:
        nodes = _two_center_sinh_nodes(barrier, anchor, upper, n, cluster_strength)
    return Grid1D(nodes, kind="diffusion")


def build_jump_grid(diff: Grid1D, upper_bound, target_nodes, pad=2):
    """Extend a diffusion grid by a geometric progression up to `upper_bound`."""
    if target_nodes < 1:
        raise ConfigError("jump grid extension needs at least one node")
    top = float(diff.nodes[-1])
    if upper_bound <= top:
        raise ConfigError("jump grid bound must exceed the diffusion grid top")
    ratio = (upper_bound / top) ** (1.0 / target_nodes)
    tail = top * ratio ** np.arange(1, target_nodes + 1)
    tail[-1] = upper_bound
    nodes = np.concatenate([diff.nodes, tail])
    return Grid1D(nodes, kind="jump", n_diffusion=diff.n, pad=pad)


@dataclass(frozen=True)
class GridSet:
    """Per-axis (diffusion, jump) grid pairs for a 1-3 dimensional problem."""

    diffusion: tuple
    jump: tuple

    def __post_init__(self):
        object.__setattr__(self, "diffusion", tuple(self.diffusion))
        object.__setattr__(self, "jump", tuple(self.jump))
        if len(self.diffusion) != len(self.jump):
            raise ConfigError("need one jump grid per diffusion grid")
        if len(self.diffusion) not in (1, 2, 3):
            raise ConfigError("dimension must be 1, 2 or 3")
        for d, j in zip(self.diffusion, self.jump):
            if j.n < d.n or not np.array_equal(j.nodes[: d.n], d.nodes):
                raise ConfigError("jump grid must contain the diffusion grid as a prefix")

    @property
    def dim(self):
        return len(self.diffusion)

    @property
    def shape(self):
        return tuple(g.n for g in self.jump)
