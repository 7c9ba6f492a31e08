"""Shared fixtures: the benchmark parameter sets used across the test suite."""

import numpy as np
import pytest

from ldl.model import (
    BankSpec,
    CorrelationSpec,
    ExpJumps,
    KouJumps,
    LiabilityMatrix,
    LocalVolTable,
    MertonJumps,
    NoJumps,
    Portfolio,
    RateCurve,
    correlation_cosine_law,
)

# 2D benchmark scenario: two banks with mutual liabilities, Merton
# idiosyncratic jumps and a common Kou factor.
TAB1 = dict(
    a=(110.0, 100.0), l=(80.0, 85.0), l12=10.0, l21=15.0,
    recovery=(0.40, 0.35), r=0.05, maturity=1.0, sigma=(0.2, 0.3), rho=0.5,
)
TAB2 = dict(
    intensity=3.0, merton_mean=(0.5, 0.3), merton_stdev=(0.3, 0.4),
    p=0.3445, theta1=3.0465, theta2=3.0775, loadings=(0.2, 0.3),
)

# 1D degenerate scenario used for the diffusion and exponential-jump checks.
TAB1DD = dict(a0=100.0, l0=40.0, recovery=1.0, sigma=0.2, r=0.05, maturity=1.0)

# 3D scenario; bank volatilities follow the 2D pattern.
TAB3D = dict(
    a=(110.0, 100.0, 120.0), l=(80.0, 90.0, 100.0),
    liab=((0.0, 20.0, 15.0), (15.0, 0.0, 10.0), (20.0, 15.0, 0.0)),
    recovery=(0.40, 0.35, 0.50), r=0.05, maturity=1.0,
    sigma=(0.2, 0.3, 0.4), rho_xz=0.5, rho_yz=0.3, phi_xy=2.0 * np.pi / 5.0,
    merton_mean=(0.5, 0.3, 0.4), merton_stdev=(0.3, 0.4, 0.5),
    intensity=3.0, p=0.3445, theta1=3.0465, theta2=3.0775,
    loadings=(0.2, 0.3, 0.25),
)


def make_tab1_portfolio(with_jumps=True, rho=None, loadings=None):
    t1, t2 = TAB1, TAB2
    banks = tuple(
        BankSpec(t1["a"][i], t1["l"][i], t1["recovery"][i], t1["sigma"][i])
        for i in range(2)
    )
    liab = LiabilityMatrix(np.array([[0.0, t1["l12"]], [t1["l21"], 0.0]]))
    rho_val = t1["rho"] if rho is None else rho
    b = t2["loadings"] if loadings is None else loadings
    if with_jumps:
        corr = CorrelationSpec(
            np.array([[1.0, rho_val], [rho_val, 1.0]]), b,
            KouJumps(t2["intensity"], t2["p"], t2["theta1"], t2["theta2"]))
        idio = tuple(
            MertonJumps(t2["intensity"], t2["merton_mean"][i], t2["merton_stdev"][i])
            for i in range(2)
        )
    else:
        corr = CorrelationSpec(np.array([[1.0, rho_val], [rho_val, 1.0]]), (0.0, 0.0))
        idio = (NoJumps(), NoJumps())
    return Portfolio(banks, liab, corr, idio, RateCurve.flat(t1["r"]), t1["maturity"])


def make_tab1dd_portfolio(jumps=None, barrier_growth=None):
    t = TAB1DD
    banks = (BankSpec(t["a0"], t["l0"], t["recovery"], t["sigma"]),)
    idio = (jumps if jumps is not None else NoJumps(),)
    return Portfolio(
        banks, LiabilityMatrix.zero(1), CorrelationSpec.independent(1), idio,
        RateCurve.flat(t["r"]), t["maturity"], barrier_growth=barrier_growth)


def make_tabcomp_portfolio():
    """1D exponential-jump regression setup.

    The published survival table corresponds to upward exponential jumps
    (rate 2, intensity 0.7) against a barrier fixed at its t=0 level, so the
    barrier growth curve is flat zero while assets still accrue the 5% rate.
    """
    return make_tab1dd_portfolio(
        jumps=ExpJumps(0.7, 2.0, sign=+1), barrier_growth=RateCurve.flat(0.0))


def make_tab3d_portfolio():
    t = TAB3D
    banks = tuple(
        BankSpec(t["a"][i], t["l"][i], t["recovery"][i], t["sigma"][i]) for i in range(3))
    liab = LiabilityMatrix(np.array(t["liab"]))
    rho_xy = correlation_cosine_law(t["rho_yz"], t["rho_xz"], t["phi_xy"])
    rho = np.array([
        [1.0, rho_xy, t["rho_xz"]],
        [rho_xy, 1.0, t["rho_yz"]],
        [t["rho_xz"], t["rho_yz"], 1.0],
    ])
    corr = CorrelationSpec(
        rho, t["loadings"], KouJumps(t["intensity"], t["p"], t["theta1"], t["theta2"]))
    idio = tuple(
        MertonJumps(t["intensity"], t["merton_mean"][i], t["merton_stdev"][i])
        for i in range(3))
    return Portfolio(banks, liab, corr, idio, RateCurve.flat(t["r"]), t["maturity"])


def make_locvol_table_1():
    times = [0.1, 0.2, 0.4, 0.6, 0.8]
    assets = [70, 80, 90, 100, 110, 120, 130, 140, 150]
    vols = [
        [0.447, 0.455, 0.459, 0.462, 0.465, 0.467, 0.468, 0.470, 0.471],
        [0.500, 0.507, 0.511, 0.514, 0.516, 0.518, 0.519, 0.520, 0.522],
        [0.548, 0.554, 0.558, 0.560, 0.562, 0.564, 0.565, 0.566, 0.567],
        [0.592, 0.597, 0.601, 0.603, 0.605, 0.607, 0.608, 0.609, 0.610],
        [0.632, 0.638, 0.641, 0.643, 0.645, 0.646, 0.648, 0.649, 0.650],
    ]
    return LocalVolTable(np.array(times), np.array(assets, float), np.array(vols))


def make_locvol_table_2():
    times = [0.1, 0.2, 0.4, 0.6, 0.8]
    assets = [50, 60, 70, 80, 90, 100, 110, 120, 130, 140]
    vols = [
        [0.548, 0.554, 0.558, 0.560, 0.562, 0.564, 0.565, 0.566, 0.567, 0.568],
        [0.592, 0.597, 0.601, 0.603, 0.605, 0.607, 0.608, 0.609, 0.610, 0.611],
        [0.632, 0.638, 0.641, 0.643, 0.645, 0.646, 0.648, 0.649, 0.650, 0.650],
        [0.671, 0.676, 0.679, 0.681, 0.683, 0.684, 0.685, 0.686, 0.687, 0.688],
        [0.707, 0.712, 0.715, 0.719, 0.718, 0.720, 0.721, 0.722, 0.722, 0.723],
    ]
    return LocalVolTable(np.array(times), np.array(assets, float), np.array(vols))


# Published 1D jump-diffusion survival regression values (asset, analytic Q).
TABCOMP_ROWS = [
    (40.85, 0.008805), (41.69, 0.017710), (42.53, 0.026710), (43.36, 0.035802),
    (44.18, 0.044982), (44.99, 0.054251), (45.79, 0.063610), (46.59, 0.073058),
    (47.38, 0.082601), (48.16, 0.092241), (48.94, 0.101984), (49.70, 0.111833),
    (50.46, 0.121795), (51.22, 0.131876), (51.96, 0.142080), (52.70, 0.152413),
    (53.43, 0.162881), (54.16, 0.173486), (54.88, 0.184233), (55.60, 0.195123),
]


@pytest.fixture
def tab1_portfolio():
    return make_tab1_portfolio()


@pytest.fixture
def tab1dd_portfolio():
    return make_tab1dd_portfolio()


@pytest.fixture
def tab3d_portfolio():
    return make_tab3d_portfolio()
