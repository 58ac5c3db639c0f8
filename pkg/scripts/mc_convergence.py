"""Monte Carlo convergence of the criterion estimate towards the ODE value."""

from __future__ import annotations

import argparse

from rs_regime.hjb import solve_hjb
from rs_regime.models import model_m2
from rs_regime.simulate import estimate_criterion, verify_martingale


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--max-paths", type=int, default=400_000)
    ap.add_argument("--state", type=int, default=0)
    args = ap.parse_args()
    model = model_m2()
    surf = solve_hjb(model)
    target = float(surf.u[0, args.state])
    print(f"ODE value u(0, {args.state}) = {target:.8f}")
    print(f"{'paths':>9} {'estimate':>12} {'SE':>10} {'dev/SE':>8} {'E[chi]':>10}")
    n = 6250
    while n <= args.max_paths:
        rep = estimate_criterion(model, surf, n, seed=args.seed, i0=args.state, target=target)
        mg = verify_martingale(model, surf, n, seed=args.seed, i0=args.state)
        print(f"{n:>9} {rep.estimate:12.8f} {rep.std_error:10.2e} "
              f"{(rep.estimate - target) / rep.std_error:8.2f} {mg.estimate:10.6f}")
        n *= 4


if __name__ == "__main__":
    main()
