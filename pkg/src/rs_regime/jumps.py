"""
Discrete jump-size laws and the integral transforms built on them.

Every jump law is a finite list of atoms ``(z_k, p_k)`` with ``z_k`` in
``(-1, inf)^m``.  Continuous densities are mapped onto atoms by
:func:`discretize_density` (tensor Gauss-Legendre on the truncated support),
so all integrals against a jump density become exact finite sums.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np
from numpy.typing import NDArray

PROB_TOL = 1e-12


class InfeasibleAllocationError(ValueError):
    """Raised when ``1 + h'z <= 0`` for some atom of a jump law."""


@dataclass(frozen=True, eq=False)
class JumpLaw:
    """Finite atomic law of a jump-size vector.

    Parameters
    ----------
    atoms : (K, m) array
        Support points, each strictly greater than -1 componentwise.
    probs : (K,) array
        Positive weights summing to one.
    """

    atoms: NDArray[np.float64]
    probs: NDArray[np.float64]
    mean: NDArray[np.float64] = field(init=False, repr=False)

    def __post_init__(self):
        atoms = np.atleast_2d(np.asarray(self.atoms, dtype=np.float64))
        probs = np.atleast_1d(np.asarray(self.probs, dtype=np.float64))
        if atoms.shape[0] != probs.shape[0]:
            raise ValueError(
                f"{atoms.shape[0]} atoms but {probs.shape[0]} probabilities")
        atoms.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "probs", probs)
        mean = probs @ atoms
        mean.setflags(write=False)
        object.__setattr__(self, "mean", mean)

    @classmethod
    def point_mass(cls, z) -> "JumpLaw":
        return cls(np.atleast_2d(np.asarray(z, dtype=np.float64)), np.ones(1))

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[0]

    def problems(self) -> list[str]:
        """Return human-readable violations of the law's invariants."""
        out = []
        if np.any(self.probs <= 0):
            out.append("non-positive atom probability")
        total = float(self.probs.sum())
        if abs(total - 1.0) > PROB_TOL:
            out.append(f"probabilities sum to {total!r}, not 1")
        if np.any(self.atoms <= -1.0):
            out.append("support below -1")
        if not np.all(np.isfinite(self.atoms)):
            out.append("non-finite support point")
        return out

    def to_dict(self) -> dict:
        return {"atoms": [{"z": z.tolist(), "p": float(p)}
                          for z, p in zip(self.atoms, self.probs)]}


def jump_mean(law: JumpLaw) -> NDArray[np.float64]:
    """Mean jump size ``sum_k p_k z_k``."""
    return law.probs @ law.atoms


def _gross(law: JumpLaw, h) -> NDArray[np.float64]:
    h = np.asarray(h, dtype=np.float64)
    gross = 1.0 + law.atoms @ h
    if np.any(gross <= 0.0):
        raise InfeasibleAllocationError(
            f"allocation {h.tolist()} sends wealth non-positive on a jump "
            f"(min 1+h'z = {gross.min():.3g})")
    return gross


def power_integral(law: JumpLaw, h, theta: float) -> float:
    """``sum_k p_k (1 + h'z_k)^(-theta)``."""
    gross = _gross(law, h)
    if theta == 0:
        return 1.0      # the law is normalized; avoid summing rounding errors
    return float(law.probs @ gross ** (-theta))


def power_integral_grad(law: JumpLaw, h, theta: float) -> NDArray[np.float64]:
    """Gradient in ``h`` of :func:`power_integral`."""
    gross = _gross(law, h)
    w = law.probs * gross ** (-theta - 1.0)
    return -theta * (w @ law.atoms)


def power_integral_hess(law: JumpLaw, h, theta: float) -> NDArray[np.float64]:
    """Hessian in ``h`` of :func:`power_integral`."""
    gross = _gross(law, h)
    w = law.probs * gross ** (-theta - 2.0)
    return theta * (theta + 1.0) * (law.atoms.T * w) @ law.atoms


def tilted_moment(law: JumpLaw, h, theta: float) -> NDArray[np.float64]:
    """``sum_k p_k z_k (1 + h'z_k)^(-1-theta)``, the jump kernel of the
    first-order conditions (theta = 0 gives the log-utility kernel)."""
    gross = _gross(law, h)
    return (law.probs * gross ** (-1.0 - theta)) @ law.atoms


def log_integral(law: JumpLaw, h) -> float:
    """``sum_k p_k log(1 + h'z_k)``."""
    return float(law.probs @ np.log(_gross(law, h)))


def log_integral_hess(law: JumpLaw, h) -> NDArray[np.float64]:
    gross = _gross(law, h)
    w = law.probs / gross ** 2
    return -(law.atoms.T * w) @ law.atoms


def squared_tilt_integral(law: JumpLaw, h, theta: float) -> float:
    """``sum_k p_k [(1 + h'z_k)^(-theta) - 1]^2``."""
    gross = _gross(law, h)
    return float(law.probs @ (gross ** (-theta) - 1.0) ** 2)


# ----------------------------------------------------------------------
# Continuous densities -> atoms
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class DensitySpec:
    """A bounded-support parametric jump density, product across dimensions.

    ``kind`` is one of ``"uniform"``, ``"trunc_normal"``, ``"trunc_dexp"``.
    ``low``/``high`` bound the support per dimension.  ``trunc_normal`` uses
    ``loc``/``scale``; ``trunc_dexp`` uses ``p_up``, ``eta_up``, ``eta_down``
    (an asymmetric double exponential centred at ``loc``).  Scalars broadcast
    over ``dim`` dimensions.
    """

    kind: str
    low: tuple[float, ...]
    high: tuple[float, ...]
    nodes: int
    loc: tuple[float, ...] = (0.0,)
    scale: tuple[float, ...] = (1.0,)
    p_up: tuple[float, ...] = (0.5,)
    eta_up: tuple[float, ...] = (10.0,)
    eta_down: tuple[float, ...] = (10.0,)
    dim: int = 1

    @classmethod
    def from_dict(cls, d: dict, dim: int) -> "DensitySpec":
        def vec(key, default):
            v = d.get(key, default)
            return tuple(float(x) for x in np.broadcast_to(np.asarray(v, float), (dim,)))
        if "nodes" not in d:
            raise ValueError("density spec needs 'nodes'")
        return cls(
            kind=d["type"], low=vec("low", -np.inf), high=vec("high", np.inf),
            nodes=int(d["nodes"]), loc=vec("loc", 0.0), scale=vec("scale", 1.0),
            p_up=vec("p_up", 0.5), eta_up=vec("eta_up", 10.0),
            eta_down=vec("eta_down", 10.0), dim=dim)

    def pdf_1d(self, k: int, z):
        z = np.asarray(z, dtype=np.float64)
        if self.kind == "uniform":
            return np.ones_like(z)
        if self.kind == "trunc_normal":
            return np.exp(-0.5 * ((z - self.loc[k]) / self.scale[k]) ** 2)
        if self.kind == "trunc_dexp":
            x = z - self.loc[k]
            up = self.p_up[k] * self.eta_up[k] * np.exp(-self.eta_up[k] * np.abs(x))
            down = (1 - self.p_up[k]) * self.eta_down[k] * np.exp(-self.eta_down[k] * np.abs(x))
            return np.where(x >= 0, up, down)
        raise ValueError(f"unknown density type {self.kind!r}")


def _panels(spec: DensitySpec, k: int) -> list[tuple[float, float]]:
    lo, hi = spec.low[k], spec.high[k]
    # the double exponential has a kink at loc; integrate each side separately
    if spec.kind == "trunc_dexp" and lo < spec.loc[k] < hi:
        return [(lo, spec.loc[k]), (spec.loc[k], hi)]
    return [(lo, hi)]


def discretize_density(spec: DensitySpec) -> JumpLaw:
    """Atomize a bounded density with Gauss-Legendre nodes per dimension.

    Weights are ``w_k f(z_k)`` renormalized to one; the multivariate law is
    the tensor product of the per-dimension laws.
    """
    if spec.nodes < 1:
        raise ValueError("nodes must be >= 1")
    x, w = np.polynomial.legendre.leggauss(spec.nodes)
    per_dim = []
    for k in range(spec.dim):
        lo, hi = spec.low[k], spec.high[k]
        if not lo > -1.0:
            raise ValueError(f"support lower bound {lo} must exceed -1")
        if not np.isfinite(hi):
            raise ValueError("support must be bounded above")
        if not hi > lo:
            raise ValueError(f"empty support [{lo}, {hi}]")
        zs, ws = [], []
        for a, b in _panels(spec, k):
            z = 0.5 * (b - a) * x + 0.5 * (b + a)
            zs.append(z)
            ws.append(0.5 * (b - a) * w * spec.pdf_1d(k, z))
        z, p = np.concatenate(zs), np.concatenate(ws)
        per_dim.append((z, p / p.sum()))

    atoms, probs = [], []
    for combo in product(*(range(len(z)) for z, _ in per_dim)):
        atoms.append([per_dim[k][0][c] for k, c in enumerate(combo)])
        probs.append(np.prod([per_dim[k][1][c] for k, c in enumerate(combo)]))
    probs = np.asarray(probs)
    return JumpLaw(np.asarray(atoms), probs / probs.sum())
