"""
Exact-path Monte Carlo for the regime-switching jump diffusion.

Regime paths are sampled event by event (exponential holding times, embedded
jump chain, jump marks from the atom law of the realized transition).  With
piecewise-constant coefficients and a piecewise-constant Markov strategy,
every time integral along a path is an exact sum, and the stochastic integral
``int h'Sigma dW`` is, conditionally on the regime path, a single Gaussian with
variance ``int h'Sigma Sigma'h dt``.  Nothing is discretized.

Paths are generated in fixed-size blocks, each with its own
``SeedSequence(seed, spawn_key=(block,))``, so results do not depend on the
number of worker threads.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .hjb import g_local
from .jumps import InfeasibleAllocationError, power_integral, squared_tilt_integral
from .market import MarketModel, MarkovStrategy, as_strategy, require_valid

BLOCK_SIZE = 8192
N_PATHS_CRITERION = 100_000
N_PATHS_MARTINGALE = 1_000_000


# ----------------------------------------------------------------------
# Reports
# ----------------------------------------------------------------------

@dataclass
class McReport:
    """Monte Carlo estimate with its standard error and a k-sigma verdict.

    ``one_sided`` checks ``estimate <= target + k SE`` instead of
    ``|estimate - target| <= k SE``; ``allowance`` widens either band.
    """

    estimate: float
    std_error: float
    n_paths: int
    seed: int
    target: float | None = None
    k_sigma: float = 3.0
    allowance: float = 0.0
    one_sided: bool = False
    label: str = ""
    diagnostics: dict = field(default_factory=dict)

    @property
    def deviation(self) -> float | None:
        if self.target is None:
            return None
        return self.estimate - self.target

    @property
    def verdict(self) -> str | None:
        if self.target is None:
            return None
        band = self.k_sigma * self.std_error + self.allowance
        band += 1e-12 * max(1.0, abs(self.target))   # exact estimators have SE = 0
        dev = self.estimate - self.target
        ok = dev <= band if self.one_sided else abs(dev) <= band
        return "pass" if ok else "fail"

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        return {"label": self.label, "estimate": self.estimate, "std_error": self.std_error,
                "n_paths": self.n_paths, "seed": self.seed, "target": self.target,
                "k_sigma": self.k_sigma, "allowance": self.allowance,
                "one_sided": self.one_sided, "verdict": self.verdict,
                "diagnostics": self.diagnostics}


def _mean_report(x, seed, **kw) -> McReport:
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    if n and np.all(x == x[0]):          # degenerate estimator: exact value, SE = 0
        return McReport(float(x[0]), 0.0, n, seed, **kw)
    mean = float(np.mean(x))
    se = float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
    return McReport(mean, se, n, seed, **kw)


def _ratio_report(a, b, seed, **kw) -> McReport:
    """``E[a]/E[b]`` with a delta-method standard error."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n = a.size
    mb = float(np.mean(b))
    ratio = float(np.mean(a)) / mb
    resid = a - ratio * b
    se = float(np.std(resid, ddof=1) / math.sqrt(n) / abs(mb))
    return McReport(ratio, se, n, seed, **kw)


# ----------------------------------------------------------------------
# Chain simulation
# ----------------------------------------------------------------------

@dataclass
class _Chain:
    times: NDArray[np.float64]      # (n, S) switch times, +inf padded
    src: NDArray[np.intp]           # (n, S) state before each switch, -1 padded
    dst: NDArray[np.intp]           # (n, S) state after each switch, -1 padded
    marks: NDArray[np.float64]      # (n, S, m) jump sizes, 0 where no jump
    i0: int

    @property
    def n_switch(self) -> NDArray[np.intp]:
        return np.sum(self.dst >= 0, axis=1)


def _jump_chain(model: MarketModel):
    Q = model.generator
    lam = model.intensities
    P = np.where(np.eye(model.n_states, dtype=bool), 0.0, Q)
    cum = np.cumsum(P, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        cum = np.where(cum[:, -1:] > 0, cum / cum[:, -1:], 1.0)
    return lam, cum


def _simulate_chain(model: MarketModel, rng: np.random.Generator, n: int, i0: int) -> _Chain:
    T, N, m = model.horizon, model.n_states, model.m_assets
    lam, cum = _jump_chain(model)
    laws = [(i, j, law, np.cumsum(law.probs) / law.probs.sum())
            for (i, j), law in sorted(model.jump_laws.items())]
    state = np.full(n, i0, dtype=np.intp)
    t = np.zeros(n)
    alive = lam[state] > 0
    cols_t, cols_src, cols_dst, cols_z = [], [], [], []
    while alive.any():
        idx = np.flatnonzero(alive)
        e = rng.standard_exponential(idx.size)
        u_dst = rng.random(idx.size)
        u_mark = rng.random(idx.size)
        s = state[idx]
        with np.errstate(divide="ignore"):
            t_new = t[idx] + e / lam[s]
        jumped = t_new < T
        dst = np.argmax(cum[s] > u_dst[:, None], axis=1)

        col_t = np.full(n, np.inf)
        col_src = np.full(n, -1, dtype=np.intp)
        col_dst = np.full(n, -1, dtype=np.intp)
        col_z = np.zeros((n, m))
        moved = idx[jumped]
        col_t[moved] = t_new[jumped]
        col_src[moved] = s[jumped]
        col_dst[moved] = dst[jumped]
        for i, j, law, cp in laws:
            sel = jumped & (s == i) & (dst == j)
            if sel.any():
                k = np.minimum(np.searchsorted(cp, u_mark[sel], side="right"), cp.size - 1)
                col_z[idx[sel]] = law.atoms[k]
        cols_t.append(col_t)
        cols_src.append(col_src)
        cols_dst.append(col_dst)
        cols_z.append(col_z)

        alive[idx[~jumped]] = False
        t[moved] = t_new[jumped]
        state[moved] = dst[jumped]
        alive[moved] &= lam[state[moved]] > 0
    if cols_t:
        return _Chain(np.stack(cols_t, 1), np.stack(cols_src, 1), np.stack(cols_dst, 1),
                      np.stack(cols_z, 1), i0)
    return _Chain(np.full((n, 0), np.inf), np.full((n, 0), -1, dtype=np.intp),
                  np.full((n, 0), -1, dtype=np.intp), np.zeros((n, 0, m)), i0)


@dataclass
class ChainPath:
    switch_times: NDArray[np.float64]
    regimes: NDArray[np.intp]
    jump_marks: NDArray[np.float64]


def simulate_chain(model: MarketModel, seed: int, i0: int = 0) -> ChainPath:
    """One regime path on ``[0, T]`` with its jump marks."""
    require_valid(model)
    ch = _simulate_chain(model, np.random.default_rng(seed), 1, i0)
    k = int(ch.n_switch[0])
    return ChainPath(ch.times[0, :k].copy(), np.concatenate([[i0], ch.dst[0, :k]]),
                     ch.marks[0, :k].copy())


# ----------------------------------------------------------------------
# Integrals along paths
# ----------------------------------------------------------------------

@dataclass
class _RateTables:
    edges: NDArray[np.float64]    # (K+1,)
    h: NDArray[np.float64]        # (K, N, m)
    rates: dict[str, NDArray[np.float64]]   # name -> (K, N)
    cum: dict[str, NDArray[np.float64]]     # name -> (K+1, N)

    def integral(self, name, a, b, s):
        """Integral of the named rate over ``[a, b]`` while in state ``s``."""
        return self._F(name, b, s) - self._F(name, a, s)

    def _F(self, name, t, s):
        K = len(self.edges) - 1
        k = np.clip(np.searchsorted(self.edges, t, side="right") - 1, 0, K - 1)
        return self.cum[name][k, s] + self.rates[name][k, s] * (t - self.edges[k])


def _rate_tables(model: MarketModel, strat: MarkovStrategy) -> _RateTables:
    T, theta, N = model.horizon, model.theta, model.n_states
    inner = [e for e in strat.edges if 0.0 < e < T]
    edges = np.unique(np.concatenate([model.breakpoints, inner]))
    K = len(edges) - 1
    names = ("drift", "var", "comp", "g", "r")
    rates = {nm: np.zeros((K, N)) for nm in names}
    hs = np.zeros((K, N, model.m_assets))
    for k in range(K):
        mid = 0.5 * (edges[k] + edges[k + 1])
        for i in range(N):
            lc = model.local(mid, i)
            h = strat(mid, i)
            hs[k, i] = h
            q = float(h @ lc.cov @ h)
            rates["drift"][k, i] = lc.r + h @ lc.excess - 0.5 * q - h @ lc.jump_drift
            rates["var"][k, i] = q
            try:
                rates["comp"][k, i] = sum(qq * (power_integral(law, h, theta) - 1.0)
                                          for _, qq, law in lc.exits if law is not None)
            except InfeasibleAllocationError as exc:
                raise InfeasibleAllocationError(
                    f"strategy infeasible in state {i} at t={mid:.6g}: {exc}") from None
            rates["g"][k, i] = g_local(lc, theta, h)
            rates["r"][k, i] = lc.r
    dt = np.diff(edges)[:, None]
    cum = {nm: np.vstack([np.zeros((1, N)), np.cumsum(rates[nm] * dt, axis=0)]) for nm in names}
    return _RateTables(edges, hs, rates, cum)


@dataclass
class PathBatch:
    """Per-path results of a simulation run (arrays indexed by path)."""

    seed: int
    i0: int
    theta: float
    log_wealth: NDArray[np.float64]
    log_chi: NDArray[np.float64]
    brownian: NDArray[np.float64]      # int h'Sigma dW
    quad_var: NDArray[np.float64]      # int h'Sigma Sigma'h dt
    cost: NDArray[np.float64]          # int g(t, X_t, h_t) dt
    jump_log: NDArray[np.float64]      # sum log(1 + h'Z)
    counts: NDArray[np.float64]        # (n, N, N) transition counts
    occupation: NDArray[np.float64]    # (n, N) time spent in each state
    times: NDArray[np.float64]
    regimes_after: NDArray[np.intp]
    marks: NDArray[np.float64]

    @property
    def n_paths(self) -> int:
        return self.log_wealth.size

    @property
    def chi(self) -> NDArray[np.float64]:
        return np.exp(self.log_chi)

    def record(self, p: int) -> "PathRecord":
        k = int(np.sum(self.regimes_after[p] >= 0))
        return PathRecord(
            switch_times=self.times[p, :k].copy(),
            regimes=np.concatenate([[self.i0], self.regimes_after[p, :k]]).astype(np.intp),
            jump_marks=self.marks[p, :k].copy(),
            brownian=float(self.brownian[p]), log_wealth=float(self.log_wealth[p]),
            chi=float(np.exp(self.log_chi[p])), seed=self.seed, path_index=p)


@dataclass
class PathRecord:
    switch_times: NDArray[np.float64]
    regimes: NDArray[np.intp]
    jump_marks: NDArray[np.float64]
    brownian: float
    log_wealth: float
    chi: float
    seed: int
    path_index: int = 0


def _simulate_block(model, tables, rng, n, i0) -> dict:
    T, N, theta = model.horizon, model.n_states, model.theta
    ch = _simulate_chain(model, rng, n, i0)
    z_brown = rng.standard_normal(n)
    S = ch.times.shape[1]

    starts = np.concatenate([np.zeros((n, 1)), np.minimum(ch.times, T)], axis=1)
    ends = np.concatenate([np.minimum(ch.times, T), np.full((n, 1), T)], axis=1)
    states = np.concatenate([np.full((n, 1), i0, dtype=np.intp), ch.dst], axis=1)
    states = np.where(states < 0, 0, states)   # padded intervals have zero length

    acc = {nm: np.zeros(n) for nm in ("drift", "var", "comp", "g")}
    occupation = np.zeros((n, N))
    for c in range(S + 1):
        a, b, s = starts[:, c], ends[:, c], states[:, c]
        for nm in acc:
            acc[nm] += tables.integral(nm, a, b, s)
        np.add.at(occupation, (np.arange(n), s), b - a)

    jump_log = np.zeros(n)
    counts = np.zeros((n, N, N))
    for c in range(S):
        valid = ch.dst[:, c] >= 0
        if not valid.any():
            continue
        rows = np.flatnonzero(valid)
        src = ch.src[rows, c]
        k = np.clip(np.searchsorted(tables.edges, ch.times[rows, c], side="right") - 1,
                    0, len(tables.edges) - 2)
        h = tables.h[k, src]
        gross = 1.0 + np.einsum("pm,pm->p", h, ch.marks[rows, c])
        if np.any(gross <= 0):
            raise InfeasibleAllocationError("strategy sent wealth non-positive at a jump")
        jump_log[rows] += np.log(gross)
        np.add.at(counts, (rows, src, ch.dst[rows, c]), 1.0)

    brownian = np.sqrt(acc["var"]) * z_brown
    log_wealth = acc["drift"] + brownian + jump_log
    log_chi = (-theta * brownian - 0.5 * theta ** 2 * acc["var"] - acc["comp"]
               - theta * jump_log)
    return dict(log_wealth=log_wealth, log_chi=log_chi, brownian=brownian,
                quad_var=acc["var"], cost=acc["g"], jump_log=jump_log, counts=counts,
                occupation=occupation, times=ch.times, regimes_after=ch.dst, marks=ch.marks)


def _pad_cat(arrs, fill):
    width = max(a.shape[1] for a in arrs)
    out = []
    for a in arrs:
        if a.shape[1] < width:
            pad = np.full((a.shape[0], width - a.shape[1]) + a.shape[2:], fill, dtype=a.dtype)
            a = np.concatenate([a, pad], axis=1)
        out.append(a)
    return np.concatenate(out, axis=0)


def simulate_paths(model: MarketModel, h, n_paths: int, seed: int, i0: int = 0,
                   workers: int = 1, block_size: int = BLOCK_SIZE) -> PathBatch:
    """Simulate ``n_paths`` independent paths under strategy ``h``.

    ``h`` is a :class:`MarkovStrategy`, a solved value surface, or a constant
    allocation of shape (m,) or (N, m).
    """
    require_valid(model)
    if not 0 <= i0 < model.n_states:
        raise ValueError(f"initial state {i0} out of range")
    strat = as_strategy(h, model)
    tables = _rate_tables(model, strat)
    sizes = [min(block_size, n_paths - b0) for b0 in range(0, n_paths, block_size)]

    def run(b):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(b,)))
        return _simulate_block(model, tables, rng, sizes[b], i0)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            blocks = list(pool.map(run, range(len(sizes))))
    else:
        blocks = [run(b) for b in range(len(sizes))]

    cat = {k: np.concatenate([blk[k] for blk in blocks])
           for k in ("log_wealth", "log_chi", "brownian", "quad_var", "cost", "jump_log",
                     "counts", "occupation")}
    cat["times"] = _pad_cat([blk["times"] for blk in blocks], np.inf)
    cat["regimes_after"] = _pad_cat([blk["regimes_after"] for blk in blocks], -1)
    cat["marks"] = _pad_cat([blk["marks"] for blk in blocks], 0.0)
    return PathBatch(seed=seed, i0=i0, theta=model.theta, **cat)


def simulate_logwealth(model: MarketModel, h, seed: int, i0: int = 0) -> PathRecord:
    """A single simulated path with its terminal log-wealth and density value."""
    return simulate_paths(model, h, 1, seed, i0).record(0)


def chi_density(path: PathRecord, model: MarketModel, h) -> float:
    """Recompute the density ``chi_T`` of a recorded path from its regime path,
    jump marks and Brownian integral, walking the path interval by interval."""
    strat = as_strategy(h, model)
    theta, T = model.theta, model.horizon
    cuts = np.unique(np.concatenate([model.breakpoints, strat.edges[(strat.edges > 0)
                                                                    & (strat.edges < T)]]))
    bounds = np.concatenate([[0.0], path.switch_times, [T]])
    log_chi = -theta * path.brownian
    for k, s in enumerate(path.regimes):
        a, b = bounds[k], bounds[k + 1]
        pts = np.concatenate([[a], cuts[(cuts > a) & (cuts < b)], [b]])
        for lo, hi in zip(pts[:-1], pts[1:]):
            mid = 0.5 * (lo + hi)
            hh = strat(mid, int(s))
            lc = model.local(mid, int(s))
            comp = sum(q * (power_integral(law, hh, theta) - 1.0)
                       for _, q, law in lc.exits if law is not None)
            log_chi -= (0.5 * theta ** 2 * hh @ lc.cov @ hh + comp) * (hi - lo)
    for tau, src, z in zip(path.switch_times, path.regimes[:-1], path.jump_marks):
        hh = strat(tau, int(src))
        log_chi -= theta * math.log1p(float(hh @ z))
    return math.exp(log_chi)


# ----------------------------------------------------------------------
# Estimators
# ----------------------------------------------------------------------

def estimate_criterion(model: MarketModel, h, n_paths: int = N_PATHS_CRITERION, seed: int = 0,
                       i0: int = 0, target: float | None = None, k_sigma: float = 3.0,
                       workers: int = 1) -> McReport:
    """Estimate ``E[V_T^-theta]`` from state ``i0``; diagnostics carry ``J_theta``."""
    batch = simulate_paths(model, h, n_paths, seed, i0, workers)
    rep = _mean_report(np.exp(-model.theta * batch.log_wealth), seed, target=target,
                       k_sigma=k_sigma, label=f"E[V_T^-theta] from state {i0}")
    rep.diagnostics["J_theta"] = -math.log(rep.estimate) / model.theta
    rep.diagnostics["J_theta_se"] = rep.std_error / (model.theta * rep.estimate)
    return rep


def verify_martingale(model: MarketModel, h, n_paths: int = N_PATHS_MARTINGALE, seed: int = 0,
                      i0: int = 0, k_sigma: float = 3.0, workers: int = 1) -> McReport:
    """Check ``E[chi_T] = 1``."""
    batch = simulate_paths(model, h, n_paths, seed, i0, workers)
    chi = batch.chi
    rep = _mean_report(chi, seed, target=1.0, k_sigma=k_sigma, label=f"E[chi_T] from state {i0}")
    rep.diagnostics["max_weight_share"] = float(chi.max() / chi.sum())
    return rep


def effective_generator(model: MarketModel, h, t: float = 0.0) -> NDArray[np.float64]:
    """Tilted generator with off-diagonals ``Q_ij E[(1 + h'Z_ij)^-theta]``."""
    strat = as_strategy(h, model)
    N, theta = model.n_states, model.theta
    Qh = np.zeros((N, N))
    for i in range(N):
        hi = strat(t, i)
        for j in range(N):
            if j == i:
                continue
            law = model.jump_law(i, j)
            factor = power_integral(law, hi, theta) if law is not None else 1.0
            Qh[i, j] = model.generator[i, j] * factor
        Qh[i, i] = -Qh[i].sum()
    return Qh


@dataclass
class GeneratorCheck:
    rates: dict[tuple[int, int], McReport]
    intensity: dict[int, McReport]
    destination: dict[tuple[int, int], McReport]

    @property
    def passed(self) -> bool:
        reps = [*self.rates.values(), *self.intensity.values(), *self.destination.values()]
        return all(r.passed for r in reps)

    def to_dict(self) -> dict:
        return {"rates": [{"from": i, "to": j, **r.to_dict()} for (i, j), r in self.rates.items()],
                "intensity": [{"state": i, **r.to_dict()} for i, r in self.intensity.items()],
                "destination": [{"from": i, "to": j, **r.to_dict()}
                                for (i, j), r in self.destination.items()]}


def verify_generator_change(model: MarketModel, h, n_paths: int = N_PATHS_CRITERION,
                            seed: int = 0, i0: int = 0, k_sigma: float = 3.0,
                            workers: int = 1) -> GeneratorCheck:
    """Importance-weighted transition statistics versus the tilted generator.

    ``E[chi N_ij] / E[chi occ_i]`` estimates ``Q^h_ij``;
    ``E[chi N_i.] / E[chi occ_i]`` the tilted exit rate ``beta(i) lambda(i)``;
    ``E[chi N_ij] / E[chi N_i.]`` the tilted jump-chain row ``gamma_ij P_ij``.
    Requires an allocation that is constant in time.
    """
    strat = as_strategy(h, model)
    if not np.all(strat.values == strat.values[:1]):
        raise ValueError("generator check needs a time-constant strategy")
    Qh = effective_generator(model, strat, 0.0)
    batch = simulate_paths(model, strat, n_paths, seed, i0, workers)
    chi = batch.chi
    N = model.n_states
    rates, intensity, destination = {}, {}, {}
    wmax = float(chi.max() / chi.sum())
    for i in range(N):
        occ = chi * batch.occupation[:, i]
        if not np.any(occ > 0):
            continue
        exits = chi * batch.counts[:, i, :].sum(axis=1)
        intensity[i] = _ratio_report(exits, occ, seed, target=float(-Qh[i, i]), k_sigma=k_sigma,
                                     label=f"tilted exit rate of state {i}",
                                     diagnostics={"max_weight_share": wmax})
        for j in range(N):
            if j == i or model.generator[i, j] == 0:
                continue
            nij = chi * batch.counts[:, i, j]
            rates[(i, j)] = _ratio_report(nij, occ, seed, target=float(Qh[i, j]),
                                          k_sigma=k_sigma, label=f"Q^h[{i},{j}]",
                                          diagnostics={"max_weight_share": wmax})
            if np.any(exits > 0):
                destination[(i, j)] = _ratio_report(
                    nij, exits, seed, target=float(Qh[i, j] / -Qh[i, i]), k_sigma=k_sigma,
                    label=f"tilted P[{i}->{j}]", diagnostics={"max_weight_share": wmax})
    return GeneratorCheck(rates, intensity, destination)


def klebaner_bound(model: MarketModel, h) -> float:
    """``sup_(t,i) theta h'SS'h + sum_j Q_ij E[((1 + h'Z_ij)^-theta - 1)^2]``."""
    strat = as_strategy(h, model)
    theta = model.theta
    edges = np.unique(np.concatenate([model.breakpoints, strat.edges[(strat.edges > 0)
                                                                     & (strat.edges < model.horizon)]]))
    best = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        mid = 0.5 * (a + b)
        for i in range(model.n_states):
            lc = model.local(mid, i)
            hh = strat(mid, i)
            val = theta * float(hh @ lc.cov @ hh)
            val += sum(q * squared_tilt_integral(law, hh, theta)
                       for _, q, law in lc.exits if law is not None)
            best = max(best, val)
    return best


def verify_entropy_bound(model: MarketModel, h, n_paths: int = N_PATHS_CRITERION,
                         seed: int = 0, i0: int = 0, k_sigma: float = 3.0,
                         workers: int = 1) -> McReport:
    """One-sided check ``E[chi_T log chi_T] <= bound * T``."""
    batch = simulate_paths(model, h, n_paths, seed, i0, workers)
    target = klebaner_bound(model, h) * model.horizon
    return _mean_report(batch.chi * batch.log_chi, seed, target=target, k_sigma=k_sigma,
                        one_sided=True, label="E[chi_T log chi_T] vs uniform bound")


def mean_variance_gap(model: MarketModel, h, n_paths: int = N_PATHS_CRITERION, seed: int = 0,
                      i0: int = 0, k_sigma: float = 3.0, allowance: float = 0.01,
                      workers: int = 1) -> McReport:
    """``J_theta - (E log V_T - theta/2 Var log V_T)`` with a delta-method SE."""
    batch = simulate_paths(model, h, n_paths, seed, i0, workers)
    theta = model.theta
    L = batch.log_wealth
    y = np.exp(-theta * (L - L.mean()))      # centred for numerical range
    my = float(np.mean(y))
    J = float(L.mean()) - math.log(my) / theta
    var = float(np.var(L, ddof=1))
    mv = float(L.mean()) - 0.5 * theta * var
    dL = L - L.mean()
    # influence of J minus influence of the mean-variance functional
    infl = -(y - my) / (theta * my) - (dL - 0.5 * theta * (dL ** 2 - var))
    se = float(np.std(infl, ddof=1) / math.sqrt(L.size))
    rep = McReport(J - mv, se, L.size, seed, target=0.0, k_sigma=k_sigma, allowance=allowance,
                   label="J_theta minus mean-variance approximation")
    rep.diagnostics.update(J_theta=J, mean_log_wealth=float(L.mean()), var_log_wealth=var)
    return rep


def write_paths_csv(batch: PathBatch, path) -> None:
    """Per-path dump for debugging."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "i0", "n_switches", "log_wealth", "chi", "brownian", "cost"])
        for p in range(batch.n_paths):
            w.writerow([p, batch.i0, int(np.sum(batch.regimes_after[p] >= 0)),
                        repr(float(batch.log_wealth[p])), repr(float(np.exp(batch.log_chi[p]))),
                        repr(float(batch.brownian[p])), repr(float(batch.cost[p]))])
