"""
HJB operator, pointwise minimization and backward ODE integration.

The value function ``u(t, i) = inf_h E[V_T^-theta | X_t = i]`` solves the
N-dimensional ODE ``du/dt + min_h A(u, h) = 0`` with ``u(T) = 1``, where for
state ``i``

    A(u, h)_i = sum_{j != i} Q_ij u_j I_ij(h) + theta u_i g(t, i, h) - u_i sum_{j != i} Q_ij I_ij(h)

and ``I_ij(h) = E[(1 + h'Z)^-theta | i -> j]``.  Written out, this is
``sum_j Q_ij u_j I_ij(h) - u_i sum_j Q_ij + theta u_i g0(h)`` with the
jump-free part ``g0(h) = (theta+1)/2 h'Ch - r - h'(mu - r1) + h' sum_j Q_ij xi_ij``.

The "independent" variant replaces ``u_j`` by ``u_i`` in the jump term and
keeps the unchanged chain generator; it models jumps that arrive at the same
rates and sizes but do not switch the regime.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import expm

from ._newton import ConvergenceError, damped_newton
from .jumps import power_integral, power_integral_grad, power_integral_hess
from .market import (LocalCoeffs, MarketModel, MarkovStrategy, admissible_set,
                     require_valid)

COINCIDING = "coinciding"
INDEPENDENT = "independent"


class HJBError(RuntimeError):
    """The backward integration left its trust region."""


# ----------------------------------------------------------------------
# Running cost g and the operator A
# ----------------------------------------------------------------------

def _g0(lc: LocalCoeffs, theta: float, h) -> float:
    return (0.5 * (theta + 1.0) * h @ lc.cov @ h - lc.r - h @ lc.excess
            + h @ lc.jump_drift)


def g_local(lc: LocalCoeffs, theta: float, h) -> float:
    h = np.asarray(h, dtype=np.float64)
    jump = sum(q * (power_integral(law, h, theta) - 1.0)
               for _, q, law in lc.exits if law is not None)
    return _g0(lc, theta, h) + jump / theta


def g_value(model: MarketModel, t: float, i: int, h) -> float:
    """Running cost ``g(t, i, h)`` of the risk-sensitive transformation."""
    return g_local(model.local(t, i), model.theta, h)


def _jump_weights(lc: LocalCoeffs, u, variant: str):
    i = lc.state
    if variant == COINCIDING:
        w = [u[j] for j, _, _ in lc.exits]
        const = -u[i] * lc.total_rate
    elif variant == INDEPENDENT:
        w = [u[i]] * len(lc.exits)
        const = sum(q * (u[j] - 2.0 * u[i]) for j, q, _ in lc.exits)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return w, const


class _Objective:
    """``h -> A(u, h)_i`` with gradient and Hessian for one (segment, state)."""

    def __init__(self, lc: LocalCoeffs, theta: float, u, variant: str = COINCIDING):
        self.lc, self.theta = lc, theta
        self.ui = float(u[lc.state])
        w, self.const = _jump_weights(lc, u, variant)
        self.jumps = [(q * wj, law) for wj, (_, q, law) in zip(w, lc.exits)]
        self.linear = lc.excess - lc.jump_drift
        self.quad = theta * self.ui * (theta + 1.0) * lc.cov

    def value(self, h) -> float:
        out = self.const + self.theta * self.ui * _g0(self.lc, self.theta, h)
        for c, law in self.jumps:
            out += c * (power_integral(law, h, self.theta) if law is not None else 1.0)
        return float(out)

    def grad(self, h) -> NDArray[np.float64]:
        g = self.quad @ h - self.theta * self.ui * self.linear
        for c, law in self.jumps:
            if law is not None:
                g = g + c * power_integral_grad(law, h, self.theta)
        return g

    def hess(self, h) -> NDArray[np.float64]:
        H = self.quad.copy()
        for c, law in self.jumps:
            if law is not None:
                H += c * power_integral_hess(law, h, self.theta)
        return H


def _check_u(u) -> NDArray[np.float64]:
    u = np.asarray(u, dtype=np.float64)
    if np.any(~(u > 0)):
        raise ValueError(f"u must be positive componentwise, got {u.tolist()}")
    return u


def operator_A(model: MarketModel, u_vec, t: float, i: int, h,
               variant: str = COINCIDING) -> float:
    """Row ``i`` of ``A(h) u`` (coinciding jumps unless ``variant`` says otherwise)."""
    u = _check_u(u_vec)
    return _Objective(model.local(t, i), model.theta, u, variant).value(
        np.asarray(h, dtype=np.float64))


def operator_A_grad(model: MarketModel, u_vec, t, i, h, variant=COINCIDING):
    u = _check_u(u_vec)
    return _Objective(model.local(t, i), model.theta, u, variant).grad(
        np.asarray(h, dtype=np.float64))


def independent_jumps_operator(model: MarketModel, u_vec, t: float, i: int, h) -> float:
    """Operator of the comparison model whose jumps do not switch regime."""
    return operator_A(model, u_vec, t, i, h, variant=INDEPENDENT)


def operator_matrix(model: MarketModel, t: float, hs) -> NDArray[np.float64]:
    """Matrix ``A(h)`` with ``A(h) u`` equal to the stacked operator rows."""
    N, theta = model.n_states, model.theta
    A = np.zeros((N, N))
    for i in range(N):
        lc = model.local(t, i)
        h = np.asarray(hs[i], dtype=np.float64)
        for j, q, law in lc.exits:
            A[i, j] = q * (power_integral(law, h, theta) if law is not None else 1.0)
        A[i, i] = theta * _g0(lc, theta, h) - lc.total_rate
    return A


# ----------------------------------------------------------------------
# Pointwise minimization
# ----------------------------------------------------------------------

@dataclass
class Minimum:
    h: NDArray[np.float64]
    value: float
    grad_norm: float
    status: str
    n_iter: int

    def __iter__(self) -> Iterator:
        return iter((self.h, self.value))


def _minimize_local(lc, theta, u, Z, warm, variant, tol_grad, max_iter, margin) -> Minimum:
    obj = _Objective(lc, theta, u, variant)
    x0 = np.zeros(Z.shape[1] if Z.size else lc.cov.shape[0])
    if warm is not None:
        warm = np.asarray(warm, dtype=np.float64)
        if Z.shape[0] == 0 or np.all(1.0 + Z @ warm > margin):
            x0 = warm
    res = damped_newton(obj.value, obj.grad, obj.hess, x0, Z,
                        tol_grad=tol_grad, max_iter=max_iter, margin=margin)
    return Minimum(res.x, res.value, res.grad_norm, res.status, res.n_iter)


def minimize_A(model: MarketModel, u_vec, t: float, i: int, warm_start=None, *,
               tol_grad: float = 1e-10, max_iter: int = 200,
               margin: float = 1e-10, variant: str = COINCIDING) -> Minimum:
    """Unique minimizer of ``h -> A(u, h)_i`` over the admissible set of ``i``.

    Unpacks as ``h, value = minimize_A(...)``.  Raises
    :class:`ConvergenceError` after ``max_iter`` Newton steps.
    """
    u = _check_u(u_vec)
    Z = admissible_set(model, i).constraints
    return _minimize_local(model.local(t, i), model.theta, u, Z, warm_start,
                           variant, tol_grad, max_iter, margin)


def g_min(model: MarketModel) -> float:
    """``inf g`` over time, states and admissible allocations.

    With ``u = 1`` the chain term cancels and ``A(1, h)_i = theta g(t, i, h)``.
    """
    ones = np.ones(model.n_states)
    best = np.inf
    for k in range(model.n_segments):
        for i in range(model.n_states):
            Z = admissible_set(model, i).constraints
            res = _minimize_local(model.local_segment(k, i), model.theta, ones, Z,
                                  None, COINCIDING, 1e-10, 200, 1e-10)
            best = min(best, res.value / model.theta)
    return float(best)


def value_bounds(model: MarketModel, t, gmin: float | None = None):
    """Lower/upper envelopes ``exp(theta g_min (T-t))`` and ``exp(-theta r_min (T-t))``."""
    gmin = g_min(model) if gmin is None else gmin
    tau = model.horizon - np.asarray(t, dtype=np.float64)
    return (np.exp(model.theta * gmin * tau), np.exp(-model.theta * model.r_min * tau))


# ----------------------------------------------------------------------
# Closed form without jumps
# ----------------------------------------------------------------------

def merton_cost(lc: LocalCoeffs, theta: float) -> float:
    """``g*`` of a jump-free state: ``-e'(SS')^-1 e / (2(1+theta)) - r``."""
    e = lc.excess
    return float(-e @ np.linalg.solve(lc.cov, e) / (2.0 * (theta + 1.0)) - lc.r)


def closed_form_no_jump(model: MarketModel, t: float):
    """``(u(t), v(t))`` for a model without price jumps.

    On each coefficient segment ``u`` evolves by ``expm((Q + theta diag g*) dt)``.
    """
    if model.has_jumps:
        raise ValueError("closed form requires a model without jump laws")
    require_valid(model)
    theta, Q, bp = model.theta, model.generator, model.breakpoints
    u = np.ones(model.n_states)
    k0 = model.segment_index(t)
    for k in range(model.n_segments - 1, k0 - 1, -1):
        start = max(bp[k], t)
        gstar = [merton_cost(model.local_segment(k, i), theta) for i in range(model.n_states)]
        u = expm((Q + theta * np.diag(gstar)) * (bp[k + 1] - start)) @ u
    return u, -np.log(u) / theta


# ----------------------------------------------------------------------
# Backward integration
# ----------------------------------------------------------------------

@dataclass
class SolverConfig:
    n_steps: int = 200
    tol_grad: float = 1e-10
    max_iter: int = 200
    feasibility_margin: float = 1e-10
    ode_tol: float = 1e-8
    error_control: bool = False
    max_steps: int = 25600
    workers: int = 1

    def __post_init__(self):
        if self.n_steps < 2:
            raise ValueError("n_steps must be >= 2")
        for name in ("tol_grad", "feasibility_margin", "ode_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class ValueSurface:
    time_grid: NDArray[np.float64]
    u: NDArray[np.float64]
    h_star: NDArray[np.float64]
    theta: float
    grad_norm: NDArray[np.float64] = field(repr=False, default=None)
    status: NDArray = field(repr=False, default=None)
    variant: str = COINCIDING
    error_estimate: float | None = None

    @property
    def v(self) -> NDArray[np.float64]:
        return -np.log(self.u) / self.theta

    @property
    def n_states(self) -> int:
        return self.u.shape[1]

    def strategy(self) -> MarkovStrategy:
        """Piecewise-constant strategy using node ``k`` on ``[t_k, t_{k+1})``."""
        return MarkovStrategy(self.time_grid, self.h_star[:-1])

    def at(self, t: float) -> NDArray[np.float64]:
        """``u(t, .)`` by linear interpolation between nodes."""
        return np.array([np.interp(t, self.time_grid, self.u[:, i])
                         for i in range(self.n_states)])


def check_invariants(model: MarketModel, surface: ValueSurface, tol: float = 1e-7,
                     gmin: float | None = None) -> list[str]:
    """Violations of the terminal condition, envelope bounds, monotonicity in
    ``t`` (checked only when ``r_min >= 0``) and strict feasibility of ``h*``."""
    out = []
    u, grid = surface.u, surface.time_grid
    if np.max(np.abs(u[-1] - 1.0)) > tol:
        out.append(f"u(T) != 1: {u[-1].tolist()}")
    lo, hi = value_bounds(model, grid, gmin)
    for i in range(model.n_states):
        bad = np.flatnonzero((u[:, i] < lo - tol) | (u[:, i] > hi + tol))
        if bad.size:
            out.append(f"state {i}: u outside envelope at t={grid[bad[0]]:.6g}")
        if model.r_min >= 0:
            drop = np.flatnonzero(np.diff(u[:, i]) < -tol)
            if drop.size:
                out.append(f"state {i}: u decreases after t={grid[drop[0]]:.6g}")
        Z = admissible_set(model, i).constraints
        if Z.shape[0] and np.any(1.0 + surface.h_star[:, i] @ Z.T <= 0):
            out.append(f"state {i}: h* not strictly feasible")
    return out


def build_grid(model: MarketModel, n_steps: int) -> NDArray[np.float64]:
    """Uniform-ish grid with roughly ``n_steps`` steps containing every breakpoint."""
    bp, T = model.breakpoints, model.horizon
    pts = [bp[:1]]
    for a, b in zip(bp[:-1], bp[1:]):
        n = max(1, math.ceil(n_steps * (b - a) / T - 1e-9))
        pts.append(np.linspace(a, b, n + 1)[1:])
    return np.concatenate(pts)


def _integrate(model: MarketModel, grid, cfg: SolverConfig, variant: str,
               gmin: float) -> ValueSurface:
    N, m, theta = model.n_states, model.m_assets, model.theta
    T = model.horizon
    Zs = [admissible_set(model, i).constraints for i in range(N)]
    n = len(grid) - 1
    u = np.empty((n + 1, N))
    hs = np.zeros((n + 1, N, m))
    gnorm = np.zeros((n + 1, N))
    status = np.full((n + 1, N), "interior", dtype=object)
    u[n] = 1.0
    warm = [np.zeros(m) for _ in range(N)]
    pool = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None

    def solve_stage(k, uvec):
        def one(i):
            return _minimize_local(model.local_segment(k, i), theta, uvec, Zs[i], warm[i],
                                   variant, cfg.tol_grad, cfg.max_iter, cfg.feasibility_margin)
        res = list(pool.map(one, range(N))) if pool else [one(i) for i in range(N)]
        for i, r in enumerate(res):
            warm[i] = r.h
        return res

    def store(node, res):
        for i, r in enumerate(res):
            hs[node, i] = r.h
            gnorm[node, i] = r.grad_norm
            status[node, i] = r.status

    def check(node):
        tau = T - grid[node]
        lo = math.exp(theta * gmin * tau) / 2.0
        hi = 2.0 * math.exp(-theta * model.r_min * tau)
        if not np.all(np.isfinite(u[node])) or np.any(u[node] < lo) or np.any(u[node] > hi):
            raise HJBError(f"u left the safety band [{lo:.6g}, {hi:.6g}] at t={grid[node]:.6g}: "
                           f"{u[node].tolist()}")

    try:
        seg_next = None
        for step in range(n, 0, -1):
            t0, t1 = grid[step - 1], grid[step]
            dt = t1 - t0
            k = model.segment_index(0.5 * (t0 + t1))
            u1 = u[step]
            r1 = solve_stage(k, u1)
            if seg_next is None or seg_next == k:
                store(step, r1)
            else:
                store(step, solve_stage(seg_next, u1))
                for i, r in enumerate(r1):
                    warm[i] = r.h
            k1 = np.array([r.value for r in r1])
            k2 = np.array([r.value for r in solve_stage(k, u1 + 0.5 * dt * k1)])
            k3 = np.array([r.value for r in solve_stage(k, u1 + 0.5 * dt * k2)])
            k4 = np.array([r.value for r in solve_stage(k, u1 + dt * k3)])
            u[step - 1] = u1 + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            check(step - 1)
            for i, r in enumerate(r1):
                warm[i] = r.h
            seg_next = k
        store(0, solve_stage(model.segment_index(grid[0]), u[0]))
    finally:
        if pool:
            pool.shutdown()

    return ValueSurface(np.asarray(grid, dtype=np.float64), u, hs, theta,
                        gnorm, status, variant)


def solve_hjb(model: MarketModel, config: SolverConfig | None = None,
              variant: str = COINCIDING) -> ValueSurface:
    """Integrate the HJB ODE backward from ``u(T) = 1`` with classic RK4.

    With ``config.error_control`` the grid is bisected until the Richardson
    estimate ``max|u_n - u_2n| / 15`` falls below ``config.ode_tol``.
    """
    cfg = config or SolverConfig()
    require_valid(model)
    gmin = g_min(model)
    grid = build_grid(model, cfg.n_steps)
    surf = _integrate(model, grid, cfg, variant, gmin)
    if not cfg.error_control:
        return surf
    while True:
        if 2 * (len(grid) - 1) > cfg.max_steps:
            raise HJBError(f"error control did not reach ode_tol={cfg.ode_tol} "
                           f"within {cfg.max_steps} steps")
        fine_grid = np.empty(2 * len(grid) - 1)
        fine_grid[::2] = grid
        fine_grid[1::2] = 0.5 * (grid[:-1] + grid[1:])
        fine = _integrate(model, fine_grid, cfg, variant, gmin)
        err = float(np.max(np.abs(fine.u[::2] - surf.u))) / 15.0
        fine.error_estimate = err
        if err <= cfg.ode_tol:
            return fine
        grid, surf = fine_grid, fine

__all__ = [
    "ConvergenceError", "HJBError", "Minimum", "SolverConfig", "ValueSurface",
    "build_grid", "check_invariants", "closed_form_no_jump", "g_min", "g_value", "independent_jumps_operator",
    "merton_cost", "minimize_A", "operator_A", "operator_A_grad", "operator_matrix",
    "solve_hjb", "value_bounds",
]
