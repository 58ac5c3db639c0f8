"""Effect of tying jumps to regime switches: coinciding versus independent jumps across theta."""

from __future__ import annotations

import argparse


from rs_regime.hjb import SolverConfig, solve_hjb
from rs_regime.models import model_m2


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--thetas", type=float, nargs="+", default=[0.25, 0.5, 1.0, 2.0, 4.0])
    args = ap.parse_args()
    cfg = SolverConfig(n_steps=100)
    print(f"{'theta':>6} {'state':>5} {'u coinc':>10} {'u indep':>10} "
          f"{'h coinc':>9} {'h indep':>9}")
    for theta in args.thetas:
        model = model_m2(theta=theta)
        co = solve_hjb(model, cfg)
        ind = solve_hjb(model, cfg, variant="independent")
        for i in range(model.n_states):
            print(f"{theta:6.2f} {i:5d} {co.u[0, i]:10.6f} {ind.u[0, i]:10.6f} "
                  f"{co.h_star[0, i, 0]:9.5f} {ind.h_star[0, i, 0]:9.5f}")


if __name__ == "__main__":
    main()
