"""Reference problem instances used by the tests, scripts and acceptance suite."""

from __future__ import annotations

import numpy as np

from .jumps import DensitySpec, JumpLaw, discretize_density
from .market import CoeffPiece, MarketModel, constant_model

MERTON = dict(mu=0.08, sigma=0.2, r=0.02)


def merton_model(theta: float = 1.0, horizon: float = 1.0) -> MarketModel:
    """Single state, single asset, no jumps."""
    return constant_model([[0.0]], [[MERTON["mu"]]], [[[MERTON["sigma"]]]], [MERTON["r"]],
                          theta, horizon)


def model_m2(theta: float = 1.0, horizon: float = 1.0, with_jumps: bool = True) -> MarketModel:
    """Two regimes, one asset, single-atom jumps at the switches.

    State 0 is a calm market, state 1 a bear market.  Leaving state 0 drops
    prices by 20%; leaving state 1 lifts them by 10%.
    """
    laws = {(0, 1): JumpLaw.point_mass([-0.2]), (1, 0): JumpLaw.point_mass([0.1])}
    return constant_model(
        [[-0.5, 0.5], [1.0, -1.0]],
        mu=[[0.08], [0.03]], sigma=[[[0.2]], [[0.3]]], r=[0.02, 0.01],
        theta=theta, horizon=horizon, jump_laws=laws if with_jumps else None)


def model_m3(theta: float = 2.0, horizon: float = 1.5) -> MarketModel:
    """Three regimes, two correlated assets, continuous jump densities and a
    coefficient change at t = 0.5."""
    Q = np.array([[-0.6, 0.4, 0.2], [0.5, -0.9, 0.4], [0.3, 0.7, -1.0]])
    sig = [np.array([[0.18, 0.0], [0.06, 0.22]]),
           np.array([[0.25, 0.0], [0.10, 0.30]]),
           np.array([[0.35, 0.0], [0.15, 0.40]])]
    mu_early = [np.array([0.09, 0.11]), np.array([0.05, 0.06]), np.array([0.01, 0.02])]
    mu_late = [np.array([0.07, 0.10]), np.array([0.04, 0.07]), np.array([0.02, 0.01])]
    r_early, r_late = [0.03, 0.02, 0.01], [0.025, 0.02, 0.015]
    coeffs = tuple(
        (CoeffPiece(0.0, 0.5, mu_early[i], sig[i], r_early[i]),
         CoeffPiece(0.5, horizon, mu_late[i], sig[i] * 1.1, r_late[i]))
        for i in range(3))
    crash = discretize_density(DensitySpec(
        "trunc_normal", low=(-0.4, -0.45), high=(-0.05, -0.05), nodes=4,
        loc=(-0.2, -0.25), scale=(0.08, 0.1), dim=2))
    deeper = discretize_density(DensitySpec(
        "uniform", low=(-0.3, -0.35), high=(-0.1, -0.1), nodes=3, dim=2))
    rebound = discretize_density(DensitySpec(
        "trunc_dexp", low=(-0.05, -0.05), high=(0.25, 0.3), nodes=3,
        loc=(0.05, 0.05), p_up=(0.7, 0.7), eta_up=(15.0, 12.0), eta_down=(30.0, 30.0), dim=2))
    laws = {(0, 1): crash, (0, 2): deeper, (1, 2): crash, (2, 0): rebound, (2, 1): rebound}
    return MarketModel(3, 2, horizon, theta, Q, coeffs, laws)


def random_no_jump_model(rng: np.random.Generator, n_states: int, m_assets: int) -> MarketModel:
    """Random jump-free model with piecewise-constant coefficients."""
    N, m = n_states, m_assets
    Q = rng.uniform(0.05, 1.0, size=(N, N))
    np.fill_diagonal(Q, 0.0)
    np.fill_diagonal(Q, -Q.sum(axis=1))
    horizon = float(rng.uniform(0.5, 2.0))
    theta = float(rng.uniform(0.5, 3.0))
    cut = float(rng.uniform(0.3, 0.7)) * horizon
    coeffs = []
    for _ in range(N):
        pieces = []
        for a, b in ((0.0, cut), (cut, horizon)):
            L = np.tril(rng.uniform(-0.05, 0.05, size=(m, m)), -1)
            L += np.diag(rng.uniform(0.15, 0.35, size=m))
            r = float(rng.uniform(0.0, 0.05))
            mu = r + rng.uniform(-0.05, 0.12, size=m)
            pieces.append(CoeffPiece(a, b, mu, L, r))
        coeffs.append(tuple(pieces))
    return MarketModel(N, m, horizon, theta, Q, tuple(coeffs))
