"""
Problem instance for the regime-switching market with coinciding jumps.

A :class:`MarketModel` bundles the factor chain generator, piecewise-constant
per-state asset coefficients, the jump laws attached to regime transitions,
the horizon and the risk-aversion parameter.  States are 0-based throughout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Mapping

import numpy as np
from numpy.typing import NDArray

from .jumps import DensitySpec, JumpLaw, discretize_density

ROW_SUM_TOL = 1e-12
COVER_TOL = 1e-12


class ModelValidationError(ValueError):
    """A model failed validation and cannot be used downstream."""

    def __init__(self, report: "ValidationReport"):
        super().__init__("; ".join(report.failures))
        self.report = report


@dataclass(frozen=True, eq=False)
class CoeffPiece:
    """Constant coefficients of one state on ``[t_start, t_end)``."""

    t_start: float
    t_end: float
    mu: NDArray[np.float64]
    sigma: NDArray[np.float64]
    r: float

    def __post_init__(self):
        object.__setattr__(self, "mu", np.atleast_1d(np.asarray(self.mu, dtype=np.float64)))
        object.__setattr__(self, "sigma", np.atleast_2d(np.asarray(self.sigma, dtype=np.float64)))
        object.__setattr__(self, "r", float(self.r))

    def to_dict(self) -> dict:
        return {"t_start": self.t_start, "t_end": self.t_end, "mu": self.mu.tolist(),
                "sigma": self.sigma.tolist(), "r": self.r}


@dataclass(frozen=True, eq=False)
class LocalCoeffs:
    """Everything the HJB operator needs for one (time segment, state)."""

    state: int
    cov: NDArray[np.float64]          # Sigma Sigma'
    excess: NDArray[np.float64]       # mu - r 1
    r: float
    exits: tuple[tuple[int, float, JumpLaw | None], ...]   # (j, Q_ij, law)
    total_rate: float                 # sum_{j != i} Q_ij
    jump_drift: NDArray[np.float64]   # sum_{j != i} Q_ij xi(i, j)


@dataclass(frozen=True, eq=False)
class MarketModel:
    n_states: int
    m_assets: int
    horizon: float
    theta: float
    generator: NDArray[np.float64]
    coeffs: tuple[tuple[CoeffPiece, ...], ...]
    jump_laws: Mapping[tuple[int, int], JumpLaw] = field(default_factory=dict)
    vol_epsilon: float = 1e-8

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.generator, dtype=np.float64))
        Q.setflags(write=False)
        object.__setattr__(self, "generator", Q)
        object.__setattr__(self, "coeffs", tuple(tuple(p) for p in self.coeffs))
        object.__setattr__(self, "jump_laws", dict(self.jump_laws))

    # -- derived structure -------------------------------------------------

    @cached_property
    def breakpoints(self) -> NDArray[np.float64]:
        """Sorted union of all piece boundaries, from 0 to T."""
        pts = {0.0, float(self.horizon)}
        for pieces in self.coeffs:
            for p in pieces:
                if 0.0 < p.t_start < self.horizon:
                    pts.add(float(p.t_start))
        return np.array(sorted(pts))

    @property
    def n_segments(self) -> int:
        return len(self.breakpoints) - 1

    def segment_index(self, t: float) -> int:
        """Right-continuous segment lookup; ``t = T`` maps to the last one."""
        k = int(np.searchsorted(self.breakpoints, t, side="right")) - 1
        return min(max(k, 0), self.n_segments - 1)

    def piece(self, t: float, i: int) -> CoeffPiece:
        for p in self.coeffs[i]:
            if p.t_start <= t < p.t_end:
                return p
        return self.coeffs[i][-1] if t >= self.coeffs[i][-1].t_start else self.coeffs[i][0]

    @cached_property
    def _local_table(self) -> list[list[LocalCoeffs]]:
        table = []
        bp = self.breakpoints
        for k in range(self.n_segments):
            mid = 0.5 * (bp[k] + bp[k + 1])
            row = []
            for i in range(self.n_states):
                p = self.piece(mid, i)
                exits = []
                drift = np.zeros(self.m_assets)
                for j in range(self.n_states):
                    q = float(self.generator[i, j])
                    if j == i or q == 0.0:
                        continue
                    law = self.jump_laws.get((i, j))
                    exits.append((j, q, law))
                    if law is not None:
                        drift = drift + q * law.mean
                row.append(LocalCoeffs(
                    state=i, cov=p.sigma @ p.sigma.T, excess=p.mu - p.r, r=p.r,
                    exits=tuple(exits), total_rate=sum(q for _, q, _ in exits),
                    jump_drift=drift))
            table.append(row)
        return table

    def local_segment(self, k: int, i: int) -> LocalCoeffs:
        return self._local_table[k][i]

    def local(self, t: float, i: int) -> LocalCoeffs:
        return self._local_table[self.segment_index(t)][i]

    def jump_law(self, i: int, j: int) -> JumpLaw | None:
        return self.jump_laws.get((i, j))

    @property
    def has_jumps(self) -> bool:
        return any(law is not None for law in self.jump_laws.values())

    @property
    def r_min(self) -> float:
        return min(p.r for pieces in self.coeffs for p in pieces)

    @property
    def intensities(self) -> NDArray[np.float64]:
        """Exit rates ``lambda(i) = -Q_ii``."""
        return -np.diag(self.generator).copy()

    def replace(self, **changes) -> "MarketModel":
        kw = dict(n_states=self.n_states, m_assets=self.m_assets, horizon=self.horizon,
                  theta=self.theta, generator=self.generator, coeffs=self.coeffs,
                  jump_laws=self.jump_laws, vol_epsilon=self.vol_epsilon)
        kw.update(changes)
        return MarketModel(**kw)

    def to_dict(self) -> dict:
        return {
            "n_states": self.n_states, "m_assets": self.m_assets,
            "horizon": self.horizon, "theta": self.theta,
            "vol_epsilon": self.vol_epsilon,
            "Q": self.generator.tolist(),
            "coeffs": [[p.to_dict() for p in pieces] for pieces in self.coeffs],
            "jump_laws": [{"from": i, "to": j, **law.to_dict()}
                          for (i, j), law in sorted(self.jump_laws.items())],
        }


# ----------------------------------------------------------------------
# Validation
# ----------------------------------------------------------------------

@dataclass
class ValidationReport:
    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def __bool__(self) -> bool:
        return self.ok


def validate_model(model: MarketModel) -> ValidationReport:
    """Check every structural assumption of the market; never raises."""
    rep = ValidationReport()
    fail = rep.failures.append
    N, m = model.n_states, model.m_assets

    if not (isinstance(N, (int, np.integer)) and N >= 1):
        fail("n_states must be a positive integer")
        return rep
    if not (isinstance(m, (int, np.integer)) and m >= 1):
        fail("m_assets must be a positive integer")
        return rep
    if not (np.isfinite(model.horizon) and model.horizon > 0):
        fail("horizon must be positive")
    if model.theta is None or not np.isfinite(model.theta) or not model.theta > 0:
        fail("theta required and > 0")
    if not model.vol_epsilon > 0:
        fail("vol_epsilon must be positive")

    Q = model.generator
    if Q.shape != (N, N):
        fail(f"generator has shape {Q.shape}, expected {(N, N)}")
    else:
        for i in range(N):
            for j in range(N):
                if i != j and Q[i, j] < 0:
                    fail(f"Q[{i},{j}] = {Q[i, j]} is negative")
            s = Q[i].sum()
            if abs(s) > ROW_SUM_TOL:
                fail(f"row {i} sums to {s:g}")

    if len(model.coeffs) != N:
        fail(f"coeffs given for {len(model.coeffs)} states, expected {N}")
    else:
        for i, pieces in enumerate(model.coeffs):
            if not pieces:
                fail(f"state {i}: no coefficient pieces")
                continue
            pieces = sorted(pieces, key=lambda p: p.t_start)
            if abs(pieces[0].t_start) > COVER_TOL:
                fail(f"state {i}: schedule starts at {pieces[0].t_start}, not 0")
            if abs(pieces[-1].t_end - model.horizon) > COVER_TOL:
                fail(f"state {i}: schedule ends at {pieces[-1].t_end}, not T={model.horizon}")
            for a, b in zip(pieces, pieces[1:]):
                if b.t_start > a.t_end + COVER_TOL:
                    fail(f"state {i}: gap between {a.t_end} and {b.t_start}")
                elif b.t_start < a.t_end - COVER_TOL:
                    fail(f"state {i}: overlap at {b.t_start}")
            for p in pieces:
                where = f"state {i} on [{p.t_start}, {p.t_end})"
                if p.t_end <= p.t_start:
                    fail(f"{where}: empty piece")
                if p.mu.shape != (m,):
                    fail(f"{where}: mu has shape {p.mu.shape}, expected {(m,)}")
                if p.sigma.shape != (m, m):
                    fail(f"{where}: sigma has shape {p.sigma.shape}, expected {(m, m)}")
                    continue
                if not (np.all(np.isfinite(p.mu)) and np.all(np.isfinite(p.sigma))
                        and np.isfinite(p.r)):
                    fail(f"{where}: non-finite coefficient")
                    continue
                lo = np.linalg.eigvalsh(p.sigma @ p.sigma.T).min()
                if lo - model.vol_epsilon < 0:
                    fail(f"{where}: Sigma Sigma' - eps I not positive semidefinite "
                         f"(min eigenvalue {lo:.3g})")

    for (i, j), law in model.jump_laws.items():
        where = f"jump law ({i},{j})"
        if not (0 <= i < N and 0 <= j < N) or i == j:
            fail(f"{where}: invalid transition")
            continue
        if law.dim != m:
            fail(f"{where}: atoms have dimension {law.dim}, expected {m}")
        for msg in law.problems():
            fail(f"{where}: {msg}")
    return rep


def require_valid(model: MarketModel) -> MarketModel:
    rep = validate_model(model)
    if not rep.ok:
        raise ModelValidationError(rep)
    return model


# ----------------------------------------------------------------------
# Admissible allocations
# ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AdmissibleSet:
    """``{h : h'z_k > -1 for all k}``; no constraints means all of R^m."""

    state: int
    constraints: NDArray[np.float64]

    @property
    def unconstrained(self) -> bool:
        return self.constraints.shape[0] == 0

    def slack(self, h) -> NDArray[np.float64]:
        """``1 + h'z_k`` for every constraint."""
        return 1.0 + self.constraints @ np.asarray(h, dtype=np.float64)

    def bounds_1d(self) -> tuple[float, float]:
        """Open interval ``(lo, hi)`` of the set when ``m = 1``."""
        z = self.constraints[:, 0]
        hi = min((-1.0 / v for v in z if v < 0), default=np.inf)
        lo = max((-1.0 / v for v in z if v > 0), default=-np.inf)
        return lo, hi


def admissible_set(model: MarketModel, i: int) -> AdmissibleSet:
    """Union of supports of all jump laws leaving state ``i``."""
    pts = [law.atoms for (a, _), law in sorted(model.jump_laws.items()) if a == i]
    if pts:
        z = np.unique(np.vstack(pts), axis=0)
    else:
        z = np.zeros((0, model.m_assets))
    return AdmissibleSet(i, z)


def is_feasible(aset: AdmissibleSet, h, margin: float = 0.0) -> bool:
    if aset.unconstrained:
        return True
    return bool(np.all(aset.constraints @ np.asarray(h, dtype=np.float64) > -1.0 + margin))


@dataclass(frozen=True, eq=False)
class MarkovStrategy:
    """Allocation ``h(t, i)`` constant on each cell ``[edges[k], edges[k+1])``.

    ``values`` has shape (K, N, m).  The last cell is closed at the right end.
    """

    edges: NDArray[np.float64]
    values: NDArray[np.float64]

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 3 or values.shape[0] != len(edges) - 1:
            raise ValueError(f"values shape {values.shape} does not match {len(edges)} edges")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, h, n_states: int, horizon: float) -> "MarkovStrategy":
        """Same allocation for all times; ``h`` is (m,) or per-state (N, m)."""
        h = np.asarray(h, dtype=np.float64)
        if h.ndim <= 1:
            h = np.broadcast_to(np.atleast_1d(h), (n_states, np.atleast_1d(h).shape[0]))
        return cls(np.array([0.0, float(horizon)]), h[None].copy())

    def cell(self, t) -> NDArray[np.intp] | int:
        k = np.searchsorted(self.edges, t, side="right") - 1
        return np.clip(k, 0, len(self.edges) - 2)

    def __call__(self, t: float, i: int) -> NDArray[np.float64]:
        return self.values[int(self.cell(t)), i]

    @property
    def is_zero(self) -> bool:
        return not np.any(self.values)


def as_strategy(h, model: MarketModel) -> MarkovStrategy:
    """Accept a strategy, or a constant allocation of shape (m,) or (N, m)."""
    if isinstance(h, MarkovStrategy):
        return h
    if hasattr(h, "strategy"):
        return h.strategy()
    h = np.asarray(h, dtype=np.float64)
    if h.ndim == 0:
        h = np.full(model.m_assets, float(h))
    s = MarkovStrategy.constant(h, model.n_states, model.horizon)
    if s.values.shape[1:] != (model.n_states, model.m_assets):
        raise ValueError(f"allocation shape {h.shape} does not fit "
                         f"{model.n_states} states and {model.m_assets} assets")
    return s


# ----------------------------------------------------------------------
# JSON ingestion
# ----------------------------------------------------------------------

def model_from_dict(d: dict) -> MarketModel:
    """Build a model from the documented JSON schema.

    Structural problems (missing keys, wrong types) raise ``ValueError``;
    value-level problems are left for :func:`validate_model`.
    """
    try:
        N = int(d["n_states"])
        m = int(d["m_assets"])
        horizon = float(d["horizon"])
        Q = np.asarray(d["Q"], dtype=np.float64)
        raw_coeffs = d["coeffs"]
    except KeyError as exc:
        raise ValueError(f"model is missing required key {exc.args[0]!r}") from None
    theta = d.get("theta")
    theta = float("nan") if theta is None else float(theta)

    coeffs = []
    for pieces in raw_coeffs:
        coeffs.append(tuple(
            CoeffPiece(float(p["t_start"]), float(p["t_end"]),
                       np.asarray(p["mu"], float).reshape(-1),
                       np.asarray(p["sigma"], float), float(p["r"]))
            for p in pieces))

    laws = {}
    for entry in d.get("jump_laws", []):
        key = (int(entry["from"]), int(entry["to"]))
        if key in laws:
            raise ValueError(f"duplicate jump law for transition {key}")
        if "atoms" in entry:
            atoms = [np.asarray(a["z"], float).reshape(-1) for a in entry["atoms"]]
            probs = [float(a["p"]) for a in entry["atoms"]]
            laws[key] = JumpLaw(np.vstack(atoms), np.asarray(probs))
        elif "density" in entry:
            laws[key] = discretize_density(DensitySpec.from_dict(entry["density"], m))
        else:
            raise ValueError(f"jump law {key} needs 'atoms' or 'density'")

    return MarketModel(n_states=N, m_assets=m, horizon=horizon, theta=theta,
                       generator=Q, coeffs=tuple(coeffs), jump_laws=laws,
                       vol_epsilon=float(d.get("vol_epsilon", 1e-8)))


def load_model(path: str | Path) -> MarketModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))


def constant_model(Q, mu, sigma, r, theta, horizon, jump_laws=None,
                   vol_epsilon: float = 1e-8) -> MarketModel:
    """Convenience constructor for time-constant coefficients.

    ``mu`` is (N, m), ``sigma`` is (N, m, m) and ``r`` is (N,); a bare scalar
    ``sigma`` per state is read as a 1x1 volatility.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
    N = Q.shape[0]
    mu = np.asarray(mu, dtype=np.float64).reshape(N, -1)
    m = mu.shape[1]
    sigma = np.asarray(sigma, dtype=np.float64).reshape(N, m, m)
    r = np.broadcast_to(np.asarray(r, dtype=np.float64), (N,))
    coeffs = tuple((CoeffPiece(0.0, float(horizon), mu[i], sigma[i], r[i]),) for i in range(N))
    return MarketModel(N, m, float(horizon), float(theta), Q, coeffs,
                       dict(jump_laws or {}), vol_epsilon)
