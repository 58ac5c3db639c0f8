"""
Command-line entry point.

    rs-regime <command> --config run.json [--force] [--threads n]

Exit codes: 0 success, 2 bad input or failed validation, 3 numerical failure
(solver breakdown, violated solver invariants, or a failed Monte Carlo verdict).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._newton import ConvergenceError
from .hjb import (COINCIDING, INDEPENDENT, HJBError, SolverConfig, ValueSurface,
                  check_invariants, solve_hjb)
from .jumps import InfeasibleAllocationError
from .market import (MarketModel, ModelValidationError, MarkovStrategy, admissible_set,
                     load_model, validate_model)
from .simulate import (McReport, estimate_criterion, simulate_paths, verify_generator_change,
                       verify_martingale, write_paths_csv)
from .strategies import kelly_allocation, kelly_residual, surface_allocations

COMMANDS = ("solve", "kelly", "simulate", "verify-martingale", "verify-generator",
            "compare-independent")
MC_COMMANDS = ("simulate", "verify-martingale", "verify-generator")
THREADS_ENV = "RS_REGIME_THREADS"

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


class InputError(ValueError):
    pass


# ----------------------------------------------------------------------
# Run configuration
# ----------------------------------------------------------------------

@dataclass
class RunConfig:
    command: str
    model_path: Path
    output_path: Path
    n_steps: int = 200
    dt: float | None = None
    n_paths: int | None = None
    seed: int | None = None
    k_sigma: float = 3.0
    i0: int = 0
    tol_grad: float = 1e-10
    tol_ode: float = 1e-8
    feasibility_margin: float = 1e-10
    error_control: bool = False
    strategy: dict | None = None
    dump_paths: bool = False
    threads: int | None = None
    base_dir: Path = field(default=Path("."), repr=False)

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path = Path(".")) -> "RunConfig":
        try:
            grid = d.get("grid", {})
            mc = d.get("mc", {})
            tol = d.get("tolerances", {})
            cfg = cls(
                command=d.get("command", ""),
                model_path=base_dir / d["model_path"],
                output_path=base_dir / d["output_path"],
                n_steps=int(grid.get("n_steps", 200)),
                dt=None if grid.get("dt") is None else float(grid["dt"]),
                n_paths=None if mc.get("n_paths") is None else int(mc["n_paths"]),
                seed=None if mc.get("seed") is None else int(mc["seed"]),
                k_sigma=float(mc.get("k_sigma", 3.0)),
                i0=int(mc.get("i0", 0)),
                tol_grad=float(tol.get("grad", 1e-10)),
                tol_ode=float(tol.get("ode", 1e-8)),
                feasibility_margin=float(tol.get("feasibility_margin", 1e-10)),
                error_control=bool(grid.get("error_control", False)),
                strategy=d.get("strategy"),
                dump_paths=bool(mc.get("dump_paths", False)),
                threads=None if d.get("threads") is None else int(d["threads"]),
                base_dir=base_dir)
        except KeyError as exc:
            raise InputError(f"config is missing required key {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            raise InputError(f"bad config value: {exc}") from None
        return cfg

    def problems(self) -> list[str]:
        out = []
        if self.command not in COMMANDS:
            out.append(f"unknown command {self.command!r}")
        if self.n_steps < 2:
            out.append("grid.n_steps must be >= 2")
        if self.dt is not None and not self.dt > 0:
            out.append("grid.dt must be > 0")
        for name in ("tol_grad", "tol_ode", "feasibility_margin", "k_sigma"):
            if not getattr(self, name) > 0:
                out.append(f"{name} must be > 0")
        if self.command in MC_COMMANDS:
            if self.seed is None:
                out.append("mc.seed is required for Monte Carlo commands")
            if self.n_paths is not None and self.n_paths < 2:
                out.append("mc.n_paths must be >= 2")
        return out

    def solver_config(self, model: MarketModel, workers: int) -> SolverConfig:
        n = self.n_steps if self.dt is None else max(2, math.ceil(model.horizon / self.dt - 1e-9))
        return SolverConfig(n_steps=n, tol_grad=self.tol_grad, ode_tol=self.tol_ode,
                            feasibility_margin=self.feasibility_margin,
                            error_control=self.error_control, workers=workers)


# ----------------------------------------------------------------------
# Persistence
# ----------------------------------------------------------------------

def _f(x) -> str:
    return repr(float(x))


def _min_slack(model: MarketModel, surface: ValueSurface) -> np.ndarray:
    """Smallest ``1 + h'z`` over the support of state ``i`` (nan if no jumps)."""
    out = np.full(surface.u.shape, np.nan)
    for i in range(model.n_states):
        Z = admissible_set(model, i).constraints
        if Z.shape[0]:
            out[:, i] = np.min(1.0 + surface.h_star[:, i] @ Z.T, axis=1)
    return out


def _json_float(x):
    x = float(x)
    return x if math.isfinite(x) else None


def surface_to_dict(model: MarketModel, surface: ValueSurface, allocations=None,
                    violations=()) -> dict:
    slack = _min_slack(model, surface)
    doc = {
        "variant": surface.variant, "theta": surface.theta,
        "n_states": model.n_states, "m_assets": model.m_assets,
        "time_grid": surface.time_grid.tolist(), "u": surface.u.tolist(),
        "v": surface.v.tolist(), "h_star": surface.h_star.tolist(),
        "grad_norm": surface.grad_norm.tolist(), "status": surface.status.tolist(),
        "min_diag": [[_json_float(x) for x in row] for row in slack],
        "error_estimate": surface.error_estimate,
        "invariant_violations": list(violations),
    }
    if allocations is not None:
        doc["allocations"] = [
            {"t": a.t, "state": a.i, "h_kelly": a.h_kelly.tolist(), "h_hedge": a.h_hedge.tolist(),
             "kelly_residual": a.kelly_fp, "star_residual": a.star_fp}
            for row in allocations for a in row]
    return doc


def surface_from_dict(d: dict) -> ValueSurface:
    try:
        return ValueSurface(np.asarray(d["time_grid"], float), np.asarray(d["u"], float),
                            np.asarray(d["h_star"], float), float(d["theta"]),
                            variant=d.get("variant", COINCIDING))
    except KeyError as exc:
        raise InputError(f"surface file is missing key {exc.args[0]!r}") from None


def load_surface(path: Path) -> ValueSurface:
    if not path.is_file():
        raise InputError(f"value surface file not found: {path}")
    with open(path) as fh:
        return surface_from_dict(json.load(fh))


def write_surface_csv(path: Path, model: MarketModel, surface: ValueSurface,
                      allocations=None) -> None:
    m = model.m_assets
    slack = _min_slack(model, surface)
    head = ["t", "state", "u", "v", *[f"h_{k + 1}" for k in range(m)], "min_diag",
            "grad_norm", "status"]
    if allocations is not None:
        head += [*[f"kelly_{k + 1}" for k in range(m)], *[f"hedge_{k + 1}" for k in range(m)],
                 "kelly_residual", "star_residual"]
    v = surface.v
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(head)
        for k, t in enumerate(surface.time_grid):
            for i in range(model.n_states):
                row = [_f(t), i, _f(surface.u[k, i]), _f(v[k, i]),
                       *map(_f, surface.h_star[k, i]),
                       "" if np.isnan(slack[k, i]) else _f(slack[k, i]),
                       _f(surface.grad_norm[k, i]), surface.status[k, i]]
                if allocations is not None:
                    a = allocations[k][i]
                    row += [*map(_f, a.h_kelly), *map(_f, a.h_hedge), _f(a.kelly_fp),
                            _f(a.star_fp)]
                w.writerow(row)


def _write_json(path: Path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _prepare_output(out: Path, force: bool) -> None:
    if out.exists() and not out.is_dir():
        raise InputError(f"output path {out} exists and is not a directory")
    if out.is_dir() and any(out.iterdir()) and not force:
        raise InputError(f"output directory {out} is not empty; pass --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)


# ----------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------

def _load_valid_model(cfg: RunConfig) -> MarketModel:
    if not cfg.model_path.is_file():
        raise InputError(f"model file not found: {cfg.model_path}")
    try:
        model = load_model(cfg.model_path)
    except (ValueError, TypeError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read model: {exc}") from None
    report = validate_model(model)
    if not report.ok:
        raise ModelValidationError(report)
    if not 0 <= cfg.i0 < model.n_states:
        raise InputError(f"mc.i0={cfg.i0} out of range for {model.n_states} states")
    return model


def _strategy(cfg: RunConfig, model: MarketModel):
    """Strategy from the config and the surface it came from (if any)."""
    spec = cfg.strategy
    if not spec:
        raise InputError("config needs a 'strategy' entry ({'surface': path} or {'constant': h})")
    if "surface" in spec:
        surf = load_surface(cfg.base_dir / spec["surface"])
        if surf.n_states != model.n_states or surf.h_star.shape[2] != model.m_assets:
            raise InputError("surface shape does not match the model")
        if abs(surf.time_grid[-1] - model.horizon) > 1e-12 or surf.time_grid[0] != 0.0:
            raise InputError("surface time grid does not span [0, T]")
        return surf.strategy(), surf
    if "constant" in spec:
        h = np.asarray(spec["constant"], dtype=np.float64)
        if h.ndim == 1:
            h = np.broadcast_to(h, (model.n_states, model.m_assets))
        if h.shape != (model.n_states, model.m_assets):
            raise InputError(f"constant strategy has shape {h.shape}")
        return MarkovStrategy.constant(h, model.n_states, model.horizon), None
    raise InputError("strategy needs 'surface' or 'constant'")


def cmd_solve(cfg: RunConfig, model: MarketModel, workers: int) -> int:
    surf = solve_hjb(model, cfg.solver_config(model, workers))
    tol = 10.0 * cfg.tol_ode
    violations = check_invariants(model, surf, tol)
    allocs = surface_allocations(model, surf)
    worst = max(a.star_fp for row in allocs for a in row)
    if worst > 1e-6:
        violations.append(f"fixed-point residual {worst:.3g} exceeds 1e-6")
    out = cfg.output_path
    _write_json(out / "surface.json", surface_to_dict(model, surf, allocs, violations))
    write_surface_csv(out / "surface.csv", model, surf, allocs)
    for v in violations:
        print(f"invariant violated: {v}", file=sys.stderr)
    print(f"solved on {len(surf.time_grid) - 1} steps; u(0) = {surf.u[0].tolist()}")
    return EXIT_NUMERIC if violations else EXIT_OK


def cmd_kelly(cfg: RunConfig, model: MarketModel, workers: int) -> int:
    bp = model.breakpoints
    rows = []
    for k in range(model.n_segments):
        t = float(bp[k])
        for i in range(model.n_states):
            hk = kelly_allocation(model, t, i, tol_grad=cfg.tol_grad,
                                  margin=cfg.feasibility_margin)
            rows.append({"t_start": t, "t_end": float(bp[k + 1]), "state": i,
                         "h_kelly": hk.tolist(), "residual": kelly_residual(model, t, i, hk)})
    _write_json(cfg.output_path / "kelly.json", {"allocations": rows})
    with open(cfg.output_path / "kelly.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_start", "t_end", "state", *[f"h_{k + 1}" for k in range(model.m_assets)],
                    "residual"])
        for r in rows:
            w.writerow([_f(r["t_start"]), _f(r["t_end"]), r["state"], *map(_f, r["h_kelly"]),
                        _f(r["residual"])])
    bad = [r for r in rows if r["residual"] > 1e-8]
    return EXIT_NUMERIC if bad else EXIT_OK


def _finish_reports(out: Path, name: str, reports: list[McReport] | dict) -> int:
    _write_json(out / name, reports if isinstance(reports, dict) else
                [r.to_dict() for r in reports])
    flat = reports if isinstance(reports, list) else []
    for r in flat:
        print(f"{r.label}: {r.estimate:.8g} +/- {r.std_error:.3g} "
              f"(target {r.target}) -> {r.verdict}")
    return EXIT_NUMERIC if any(r.verdict == "fail" for r in flat) else EXIT_OK


def cmd_simulate(cfg: RunConfig, model: MarketModel, workers: int) -> int:
    strat, surf = _strategy(cfg, model)
    n = cfg.n_paths or 100_000
    target = float(surf.u[0, cfg.i0]) if surf is not None else cfg.strategy.get("target")
    rep = estimate_criterion(model, strat, n, cfg.seed, cfg.i0, target, cfg.k_sigma, workers)
    if cfg.dump_paths:
        write_paths_csv(simulate_paths(model, strat, n, cfg.seed, cfg.i0, workers),
                        cfg.output_path / "paths.csv")
    return _finish_reports(cfg.output_path, "report.json", [rep])


def cmd_verify_martingale(cfg: RunConfig, model: MarketModel, workers: int) -> int:
    strat, _ = _strategy(cfg, model)
    rep = verify_martingale(model, strat, cfg.n_paths or 1_000_000, cfg.seed, cfg.i0,
                            cfg.k_sigma, workers)
    return _finish_reports(cfg.output_path, "report.json", [rep])


def cmd_verify_generator(cfg: RunConfig, model: MarketModel, workers: int) -> int:
    strat, _ = _strategy(cfg, model)
    try:
        chk = verify_generator_change(model, strat, cfg.n_paths or 100_000, cfg.seed, cfg.i0,
                                      cfg.k_sigma, workers)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    reps = [*chk.rates.values(), *chk.intensity.values(), *chk.destination.values()]
    _write_json(cfg.output_path / "report.json", chk.to_dict())
    for r in reps:
        print(f"{r.label}: {r.estimate:.6g} +/- {r.std_error:.3g} "
              f"(target {r.target:.6g}) -> {r.verdict}")
    return EXIT_OK if chk.passed else EXIT_NUMERIC


def cmd_compare_independent(cfg: RunConfig, model: MarketModel, workers: int) -> int:
    sc = cfg.solver_config(model, workers)
    co = solve_hjb(model, sc, COINCIDING)
    ind = solve_hjb(model, sc, INDEPENDENT)
    rows = []
    for i in range(model.n_states):
        targets = [j for j in range(model.n_states) if model.jump_law(i, j) is not None]
        u0 = co.u[0]
        if not targets:
            predicted = "equal"
        elif all(u0[j] > u0[i] for j in targets):
            predicted = "more_risk_averse"
        else:
            predicted = "none"      # the ordering argument only covers u(j) > u(i)
        n_co = float(np.linalg.norm(co.h_star[0, i]))
        n_ind = float(np.linalg.norm(ind.h_star[0, i]))
        rows.append({"state": i, "u_coinciding": float(co.u[0, i]),
                     "u_independent": float(ind.u[0, i]),
                     "h_coinciding": co.h_star[0, i].tolist(),
                     "h_independent": ind.h_star[0, i].tolist(),
                     "norm_coinciding": n_co, "norm_independent": n_ind,
                     "predicted": predicted,
                     "observed": ("more_risk_averse" if n_co < n_ind else
                                  "less_risk_averse" if n_co > n_ind else "equal")})
    _write_json(cfg.output_path / "compare.json", {"t": 0.0, "states": rows})
    m = model.m_assets
    with open(cfg.output_path / "compare.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["state", "u_coinciding", "u_independent",
                    *[f"hc_{k + 1}" for k in range(m)], *[f"hi_{k + 1}" for k in range(m)],
                    "predicted", "observed"])
        for r in rows:
            w.writerow([r["state"], _f(r["u_coinciding"]), _f(r["u_independent"]),
                        *map(_f, r["h_coinciding"]), *map(_f, r["h_independent"]),
                        r["predicted"], r["observed"]])
    for r in rows:
        print(f"state {r['state']}: |h| coinciding {r['norm_coinciding']:.6g}, "
              f"independent {r['norm_independent']:.6g}; predicted {r['predicted']}")
    return EXIT_OK


HANDLERS = {"solve": cmd_solve, "kelly": cmd_kelly, "simulate": cmd_simulate,
            "verify-martingale": cmd_verify_martingale,
            "verify-generator": cmd_verify_generator,
            "compare-independent": cmd_compare_independent}


# ----------------------------------------------------------------------
# Entry point
# ----------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rs-regime", description=__doc__.strip().splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, type=Path, help="JSON run configuration")
    p.add_argument("--force", action="store_true", help="overwrite existing outputs")
    p.add_argument("--threads", type=int, help=f"worker threads (fallback: ${THREADS_ENV})")
    p.add_argument("--seed", type=int, help="override mc.seed")
    p.add_argument("--n-paths", type=int, help="override mc.n_paths")
    p.add_argument("--n-steps", type=int, help="override grid.n_steps")
    p.add_argument("--output", type=Path, help="override output_path")
    return p


def _workers(args, cfg: RunConfig) -> int:
    if args.threads is not None:
        n = args.threads
    elif os.environ.get(THREADS_ENV):
        try:
            n = int(os.environ[THREADS_ENV])
        except ValueError:
            raise InputError(f"{THREADS_ENV} must be an integer") from None
    else:
        n = cfg.threads or 1
    if n < 1:
        raise InputError("thread count must be >= 1")
    return n


def run(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if not args.config.is_file():
            raise InputError(f"config file not found: {args.config}")
        try:
            with open(args.config) as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"config is not valid JSON: {exc}") from None
        raw["command"] = args.command
        cfg = RunConfig.from_dict(raw, args.config.resolve().parent)
        for name, attr in (("seed", "seed"), ("n_paths", "n_paths"), ("n_steps", "n_steps")):
            val = getattr(args, name)
            if val is not None:
                setattr(cfg, attr, val)
        if args.output is not None:
            cfg.output_path = args.output
        probs = cfg.problems()
        if probs:
            raise InputError("; ".join(probs))
        workers = _workers(args, cfg)
        model = _load_valid_model(cfg)
        _prepare_output(cfg.output_path, args.force)
        return HANDLERS[cfg.command](cfg, model, workers)
    except ModelValidationError as exc:
        print("model validation failed:", file=sys.stderr)
        for msg in exc.report.failures:
            print(f"  {msg}", file=sys.stderr)
        return EXIT_INPUT
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (HJBError, ConvergenceError, InfeasibleAllocationError, np.linalg.LinAlgError,
            FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
