"""Solve the bundled reference models and print value, allocation and residual tables."""

from __future__ import annotations

import argparse
import math

import numpy as np

from rs_regime.hjb import SolverConfig, check_invariants, g_min, solve_hjb
from rs_regime.models import merton_model, model_m2, model_m3
from rs_regime.strategies import surface_allocations


def report(name, model, n_steps):
    surf = solve_hjb(model, SolverConfig(n_steps=n_steps))
    rows = surface_allocations(model, surf)
    print(f"\n== {name}: N={model.n_states}, m={model.m_assets}, theta={model.theta}, "
          f"T={model.horizon}")
    print(f"{'state':>5} {'u(0)':>12} {'v(0)':>12}  h*(0) / Kelly / hedge")
    for i, a in enumerate(rows[0]):
        fmt = lambda x: np.array2string(np.asarray(x), precision=5)
        print(f"{i:>5} {surf.u[0, i]:12.8f} {surf.v[0, i]:12.8f}  "
              f"{fmt(a.h_star)} / {fmt(a.h_kelly)} / {fmt(a.h_hedge)}")
    star = max(a.star_fp for r in rows for a in r)
    kelly = max(a.kelly_fp for r in rows for a in r)
    print(f"max residuals: star {star:.2e}, Kelly {kelly:.2e}; "
          f"invariant violations: {check_invariants(model, surf) or 'none'}")
    return surf


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-steps", type=int, default=200)
    args = ap.parse_args()
    merton = merton_model()
    surf = report("single-state Merton", merton, args.n_steps)
    print(f"g* = {g_min(merton):.12f}; exp(theta g* T) = "
          f"{math.exp(merton.theta * g_min(merton) * merton.horizon):.12f}; "
          f"solver u(0) = {surf.u[0, 0]:.12f}")
    report("two-regime model with coinciding jumps", model_m2(), args.n_steps)
    report("three-regime piecewise model", model_m3(), args.n_steps)


if __name__ == "__main__":
    main()
