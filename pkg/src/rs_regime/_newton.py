"""Damped Newton for smooth strictly convex objectives on {x : 1 + Zx > 0}."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import NDArray


class ConvergenceError(RuntimeError):
    """Newton iteration hit its iteration cap."""

    def __init__(self, msg: str, x: NDArray[np.float64], grad_norm: float):
        super().__init__(f"{msg} (last |grad| = {grad_norm:.3g}, x = {np.asarray(x).tolist()})")
        self.x = x
        self.grad_norm = grad_norm


@dataclass
class NewtonResult:
    x: NDArray[np.float64]
    value: float
    grad_norm: float
    n_iter: int
    status: str   # "interior" or "boundary"


def _max_step(Z, x, d, margin):
    """Largest t with ``1 + Z(x + t d) >= margin`` (inf if unconstrained)."""
    if Z.shape[0] == 0:
        return np.inf
    slope = Z @ d
    neg = slope < 0
    if not np.any(neg):
        return np.inf
    slack = 1.0 + Z[neg] @ x - margin
    return float(np.min(slack / -slope[neg]))


def damped_newton(
    fun: Callable, grad: Callable, hess: Callable, x0, Z,
    tol_grad: float = 1e-10, max_iter: int = 200, margin: float = 1e-10,
    armijo: float = 1e-4, shrink: float = 0.5,
) -> NewtonResult:
    """Minimize ``fun`` from a strictly feasible ``x0``.

    ``Z`` holds the support points; every iterate keeps ``1 + Zx >= margin``.
    A minimum pinned against that margin with an outward gradient is returned
    with ``status="boundary"`` instead of raising.
    """
    x = np.array(x0, dtype=np.float64)
    f = fun(x)
    g = grad(x)
    gn = float(np.max(np.abs(g)))
    for it in range(max_iter):
        if gn <= tol_grad:
            return NewtonResult(x, f, gn, it, "interior")
        H = hess(x)
        try:
            d = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            d = -g
        decrement = -float(g @ d)
        if decrement <= 0:
            d, decrement = -g, float(g @ g)

        t_cap = _max_step(Z, x, d, margin)
        t = min(1.0, t_cap)
        # quadratic regime: objective differences sit at rounding level
        if t == 1.0 and decrement < 1e-12 * max(1.0, abs(f)):
            x = x + d
            f, g = fun(x), grad(x)
            gn = float(np.max(np.abs(g)))
            continue

        while True:
            x_new = x + t * d
            f_new = fun(x_new)
            if f_new <= f - armijo * t * decrement:
                break
            t *= shrink
            if t * float(np.max(np.abs(d))) < 1e-16 * (1.0 + float(np.max(np.abs(x)))):
                x_new = None
                break
        if x_new is None:
            at_wall = Z.shape[0] > 0 and float(np.min(1.0 + Z @ x)) <= 2 * margin + 1e-12
            if at_wall or t_cap < 1e-12:
                return NewtonResult(x, f, gn, it, "boundary")
            raise ConvergenceError("line search stalled", x, gn)
        x, f = x_new, f_new
        g = grad(x)
        gn = float(np.max(np.abs(g)))
        if t_cap <= 1.0 and t == t_cap and float(np.min(1.0 + Z @ x)) <= 2 * margin:
            # stepped onto the margin; stop if pushing further outward
            d_next = -g
            if _max_step(Z, x, d_next, margin) < 1e-14:
                return NewtonResult(x, f, gn, it + 1, "boundary")
    if gn <= tol_grad:
        return NewtonResult(x, f, gn, max_iter, "interior")
    raise ConvergenceError(f"no convergence in {max_iter} iterations", x, gn)
