"""
Kelly allocation, first-order fixed-point residuals and the mutual-fund split.

The log-optimal allocation maximizes the instantaneous expected log growth

    l(t, i, h) = r + h'(mu - r1) - h'Ch/2 + sum_j Q_ij [E log(1 + h'Z_ij) - h'xi_ij]

which is strictly concave on the admissible set.  The risk-sensitive optimum
satisfies the fixed point

    h = (SS')^-1 [mu - r1 + sum_j Q_ij ((u_j/u_i) E[Z (1+h'Z)^-(1+theta)] - xi_ij)] / (1 + theta)

and setting ``theta = 0`` with unit ``u`` ratios recovers the Kelly fixed point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from ._newton import damped_newton
from .jumps import log_integral, log_integral_hess, tilted_moment
from .market import LocalCoeffs, MarketModel, admissible_set

KELLY_RESIDUAL_TOL = 1e-8
STAR_RESIDUAL_TOL = 1e-6


def _growth(lc: LocalCoeffs, h) -> float:
    out = lc.r + h @ lc.excess - 0.5 * h @ lc.cov @ h
    for _, q, law in lc.exits:
        if law is not None:
            out += q * (log_integral(law, h) - h @ law.mean)
    return float(out)


def _growth_grad(lc: LocalCoeffs, h) -> NDArray[np.float64]:
    g = lc.excess - lc.cov @ h
    for _, q, law in lc.exits:
        if law is not None:
            g = g + q * (tilted_moment(law, h, 0.0) - law.mean)
    return g


def _growth_hess(lc: LocalCoeffs, h) -> NDArray[np.float64]:
    H = -lc.cov.copy()
    for _, q, law in lc.exits:
        if law is not None:
            H += q * log_integral_hess(law, h)
    return H


def growth_rate(model: MarketModel, t: float, i: int, h) -> float:
    """Expected log-growth rate ``l(t, i, h)``."""
    return _growth(model.local(t, i), np.asarray(h, dtype=np.float64))


def growth_rate_grad(model: MarketModel, t: float, i: int, h) -> NDArray[np.float64]:
    return _growth_grad(model.local(t, i), np.asarray(h, dtype=np.float64))


def kelly_allocation(model: MarketModel, t: float, i: int, *, tol_grad: float = 1e-10,
                     max_iter: int = 200, margin: float = 1e-10) -> NDArray[np.float64]:
    """Log-optimal allocation in state ``i`` at time ``t``."""
    lc = model.local(t, i)
    Z = admissible_set(model, i).constraints
    res = damped_newton(lambda h: -_growth(lc, h), lambda h: -_growth_grad(lc, h),
                        lambda h: -_growth_hess(lc, h), np.zeros(model.m_assets), Z,
                        tol_grad=tol_grad, max_iter=max_iter, margin=margin)
    return res.x


def _fixed_point_rhs(lc: LocalCoeffs, h, ratios, theta: float) -> NDArray[np.float64]:
    b = lc.excess.copy()
    for (j, q, law) in lc.exits:
        if law is not None:
            b += q * (ratios[j] * tilted_moment(law, h, theta) - law.mean)
    return np.linalg.solve(lc.cov, b) / (1.0 + theta)


def fixed_point_residual(model: MarketModel, t: float, i: int, h, u_vec,
                         theta: float | None = None) -> float:
    """``|h - RHS(h)|_inf`` for the risk-sensitive first-order fixed point."""
    theta = model.theta if theta is None else theta
    h = np.asarray(h, dtype=np.float64)
    u = np.asarray(u_vec, dtype=np.float64)
    if np.any(~(u > 0)):
        raise ValueError("u must be positive")
    rhs = _fixed_point_rhs(model.local(t, i), h, u / u[i], theta)
    return float(np.max(np.abs(h - rhs)))


def kelly_residual(model: MarketModel, t: float, i: int, h) -> float:
    """``|h - RHS(h)|_inf`` for the Kelly fixed point."""
    h = np.asarray(h, dtype=np.float64)
    rhs = _fixed_point_rhs(model.local(t, i), h, np.ones(model.n_states), 0.0)
    return float(np.max(np.abs(h - rhs)))


def mutual_fund_split(h_star, h_kelly, theta: float) -> NDArray[np.float64]:
    """Hedge portfolio ``((1 + theta) h* - h^K) / theta``."""
    if not theta > 0:
        raise ValueError("theta must be positive for the mutual-fund split")
    return ((1.0 + theta) * np.asarray(h_star, float) - np.asarray(h_kelly, float)) / theta


def recombine(h_kelly, h_hedge, theta: float) -> NDArray[np.float64]:
    return np.asarray(h_kelly) / (1.0 + theta) + theta / (1.0 + theta) * np.asarray(h_hedge)


@dataclass
class AllocationReport:
    t: float
    i: int
    h_star: NDArray[np.float64]
    h_kelly: NDArray[np.float64]
    h_hedge: NDArray[np.float64]
    kelly_fp: float
    star_fp: float

    def converged(self, kelly_tol: float = KELLY_RESIDUAL_TOL,
                  star_tol: float = STAR_RESIDUAL_TOL) -> bool:
        return self.kelly_fp <= kelly_tol and self.star_fp <= star_tol


def allocation_report(model: MarketModel, t: float, i: int, h_star, u_vec) -> AllocationReport:
    hk = kelly_allocation(model, t, i)
    hs = np.asarray(h_star, dtype=np.float64)
    return AllocationReport(
        t=float(t), i=int(i), h_star=hs, h_kelly=hk,
        h_hedge=mutual_fund_split(hs, hk, model.theta),
        kelly_fp=kelly_residual(model, t, i, hk),
        star_fp=fixed_point_residual(model, t, i, hs, u_vec))


def surface_allocations(model: MarketModel, surface) -> list[list[AllocationReport]]:
    """Allocation reports at every node and state of a solved surface."""
    out = []
    kelly_cache: dict[tuple[int, int], NDArray[np.float64]] = {}
    for k, t in enumerate(surface.time_grid):
        seg = model.segment_index(t)
        row = []
        for i in range(model.n_states):
            if (seg, i) not in kelly_cache:
                kelly_cache[(seg, i)] = kelly_allocation(model, t, i)
            hk = kelly_cache[(seg, i)]
            hs = surface.h_star[k, i]
            row.append(AllocationReport(
                t=float(t), i=i, h_star=hs, h_kelly=hk,
                h_hedge=mutual_fund_split(hs, hk, model.theta),
                kelly_fp=kelly_residual(model, t, i, hk),
                star_fp=fixed_point_residual(model, t, i, hs, surface.u[k])))
        out.append(row)
    return out
