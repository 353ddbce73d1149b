"""Discretized label space, bounded densities and the entropy functional."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from .errors import (
    BoxViolation,
    CorrectionTooLarge,
    DimensionMismatch,
    InvalidBounds,
    NoFeasibleBounds,
    NonFiniteValue,
)

TOL_MASS = 1e-10
MAX_CORRECTION = 1e-6
_BOX_SLACK = 1e-9

# growth functions admissible for the pointwise operator bound
OMEGAS: dict[str, Callable[[float], float]] = {
    "linear": lambda s: s,
    "saturating": lambda s: s / (1.0 + s),
}


def resolve_omega(omega) -> tuple[str, Callable[[float], float]]:
    if callable(omega):
        return getattr(omega, "__name__", "custom"), omega
    try:
        return omega, OMEGAS[omega]
    except KeyError:
        raise InvalidBounds(f"unknown growth function {omega!r}") from None


@dataclass(frozen=True, eq=False)
class StrategySpace:
    """Quadrature model of the compact label space (U, eta).

    ``nodes`` has shape (M, m) for points of [0, 1]^m, or (M, 1) holding the
    integers 1..H when ``metric == "discrete"``.
    """

    nodes: np.ndarray
    weights: np.ndarray
    metric: str = "euclidean"
    p: float = 2.0

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim == 1:
            nodes = nodes[:, None]
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.shape[0] != nodes.shape[0]:
            raise DimensionMismatch("weights must be one value per node")
        if np.any(w <= 0):
            raise InvalidBounds("every node weight must be positive (full support)")
        if abs(w.sum() - 1.0) > 1e-12:
            raise InvalidBounds(f"weights sum to {w.sum()!r}, expected 1")
        if self.metric not in ("euclidean", "discrete"):
            raise InvalidBounds(f"unknown metric {self.metric!r}")
        if not (self.p >= 1.0):
            raise InvalidBounds("p must be >= 1")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "p", float(self.p))

    @classmethod
    def uniform_grid(cls, M: int, p: float = 2.0) -> "StrategySpace":
        """Midpoint grid of M nodes on [0, 1] with equal weights."""
        return cls((np.arange(M) + 0.5) / M, np.full(M, 1.0 / M), "euclidean", p)

    @classmethod
    def discrete(cls, H: int, p: float = 2.0, weights=None) -> "StrategySpace":
        w = np.full(H, 1.0 / H) if weights is None else np.asarray(weights, float)
        return cls(np.arange(1, H + 1, dtype=float), w, "discrete", p)

    @property
    def M(self) -> int:
        return self.weights.shape[0]

    def distance_matrix(self) -> np.ndarray:
        if self.metric == "discrete":
            return (self.nodes[:, None, 0] != self.nodes[None, :, 0]).astype(float)
        diff = self.nodes[:, None, :] - self.nodes[None, :, :]
        return np.sqrt((diff**2).sum(axis=2))

    def with_p(self, p: float) -> "StrategySpace":
        return StrategySpace(self.nodes, self.weights, self.metric, p)

    def to_dict(self) -> dict:
        nodes = self.nodes[:, 0] if self.nodes.shape[1] == 1 else self.nodes
        return {
            "nodes": nodes.tolist(),
            "weights": self.weights.tolist(),
            "metric": self.metric,
            "p": self.p,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "StrategySpace":
        return cls(np.asarray(data["nodes"], float), np.asarray(data["weights"], float),
                   data.get("metric", "euclidean"), data.get("p", 2.0))

    @classmethod
    def from_json(cls, text: str) -> "StrategySpace":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class LabelDensity:
    """Node values of a density in C_{r,R}."""

    values: np.ndarray
    r: float = 0.0
    R: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if not (0.0 <= self.r < 1.0 < self.R):
            raise InvalidBounds(f"need 0 <= r < 1 < R, got r={self.r}, R={self.R}")

    def mass(self, space: StrategySpace) -> float:
        return float(space.weights @ self.values)

    def check(self, space: StrategySpace, tol_mass: float = TOL_MASS) -> None:
        if self.values.shape != (space.M,):
            raise DimensionMismatch("density must have one value per node")
        if not np.all(np.isfinite(self.values)):
            raise NonFiniteValue("density has non-finite entries")
        if abs(self.mass(space) - 1.0) > tol_mass:
            raise InvalidBounds(f"mass {self.mass(space)!r} differs from 1")
        if self.values.min() < self.r or self.values.max() > self.R:
            raise BoxViolation("density leaves its box")


@dataclass(frozen=True)
class EntropyBounds:
    alpha: float
    k: float
    h_low: float
    h_high: float


@dataclass(frozen=True)
class BoxBounds:
    r_eps: float
    R_eps: float
    eps: float
    C_T: float
    omega: str = "linear"

    @property
    def omega_fn(self) -> Callable[[float], float]:
        return resolve_omega(self.omega)[1]

    def satisfies(self) -> tuple[bool, bool]:
        """Re-evaluate the two defining inequalities."""
        return _lower_ok(self.r_eps, self.eps, self.C_T, self.omega_fn), _upper_ok(
            self.r_eps, self.R_eps, self.eps, self.C_T, self.omega_fn
        )


def _values(ell) -> np.ndarray:
    return ell.values if isinstance(ell, LabelDensity) else np.asarray(ell, dtype=float)


def negative_entropy(space: StrategySpace, ell) -> float:
    """I(l) = sum_k eta_k l_k log l_k, with 0 log 0 = 0."""
    v = _values(ell)
    if np.any(v < 0) or not np.all(np.isfinite(v)):
        raise NonFiniteValue("negative entropy needs finite non-negative values")
    pos = v > 0
    return float(space.weights[pos] @ (v[pos] * np.log(v[pos])))


def entropy_drift(space: StrategySpace, ell) -> np.ndarray:
    """H(l)_k = l_k (I(l) - log l_k); zero mean against eta."""
    v = _values(ell)
    if np.any(v <= 0) or not np.all(np.isfinite(v)):
        raise NonFiniteValue("entropy drift needs strictly positive values")
    _, H = kernels.entropy_drift(v[None, :], space.weights)
    return H[0]


def entropy_bounds(r: float, R: float) -> EntropyBounds:
    if not (0.0 < r < 1.0 < R < math.inf):
        raise InvalidBounds(f"need 0 < r < 1 < R < inf, got ({r}, {R})")
    alpha = (R - 1.0) * r / (R - r)
    k = alpha * math.log(r) + (1.0 - alpha) * math.log(R)
    return EntropyBounds(alpha, k, -R * math.log(R), R * k + 1.0 / math.e)


def entropy_lipschitz(r: float, R: float) -> float:
    """L_{r,R} = (R + 1) L' + k_{r,R} with L' the Lipschitz constant of t log t on [r, R]."""
    lp = max(abs(1.0 + math.log(r)), abs(1.0 + math.log(R)))
    return (R + 1.0) * lp + entropy_bounds(r, R).k


def _lower_ok(r, eps, C_T, omega) -> bool:
    return eps * math.log(3.0 / (4.0 * r)) >= C_T * omega(4.0 * r / 3.0) / r


def _upper_ok(r, R, eps, C_T, omega) -> bool:
    alpha = entropy_bounds(r, R).alpha
    return alpha * math.log(R / r) >= 2.0 * C_T * omega(R) / (eps * R)


def select_box_bounds(eps: float, C_T: float, omega="linear", max_j: int = 64) -> BoxBounds:
    """Largest dyadic r_eps = 2^-j and then smallest dyadic R_eps = 2^j meeting both inequalities."""
    if eps <= 0:
        raise InvalidBounds("eps must be positive (the entropic box is undefined at eps = 0)")
    if C_T < 0:
        raise InvalidBounds("C_T must be non-negative")
    name, fn = resolve_omega(omega)
    r = next((2.0**-j for j in range(1, max_j + 1) if _lower_ok(2.0**-j, eps, C_T, fn)), None)
    if r is None:
        raise NoFeasibleBounds(f"no r_eps >= 2^-{max_j} for eps={eps}, C_T={C_T}")
    R = next((2.0**j for j in range(1, max_j + 1) if _upper_ok(r, 2.0**j, eps, C_T, fn)), None)
    if R is None:
        raise NoFeasibleBounds(f"no R_eps <= 2^{max_j} for eps={eps}, C_T={C_T}")
    box = BoxBounds(r, R, eps, C_T, name if not callable(omega) else omega)
    if not all(box.satisfies()):  # pragma: no cover - certified by construction
        raise NoFeasibleBounds("selected bounds failed re-certification")
    return box


def lp_norm(space: StrategySpace, f, p: float | None = None) -> float:
    p = space.p if p is None else p
    a = np.abs(_values(f))
    if p == math.inf:
        return float(a.max())
    return float((space.weights @ a**p) ** (1.0 / p))


def lp_norms(space: StrategySpace, F: np.ndarray, p: float | None = None) -> np.ndarray:
    """Row-wise L^p(eta) norms of an (n, M) array."""
    p = space.p if p is None else p
    A = np.abs(F)
    if p == math.inf:
        return A.max(axis=1)
    return (A**p @ space.weights) ** (1.0 / p)


def renormalize_rows(w: np.ndarray, L: np.ndarray, r: float, R: float,
                     max_correction: float = MAX_CORRECTION) -> tuple[np.ndarray, float]:
    """Restore unit mass row-wise by shifting mass along the available headroom.

    Returns the corrected array and the largest mass defect removed.
    """
    lo = L.min()
    hi = L.max()
    if lo < r or hi > R:
        if lo < r - _BOX_SLACK or hi > R + _BOX_SLACK:
            raise BoxViolation(f"values in [{lo}, {hi}] leave the box [{r}, {R}]")
        L = np.clip(L, r, R)
    defect = L @ w - 1.0
    worst = float(np.abs(defect).max()) if defect.size else 0.0
    if worst > max_correction:
        raise CorrectionTooLarge(f"mass defect {worst:.3e} exceeds {max_correction:.0e}")
    if worst == 0.0:
        return L, 0.0
    down = (L - r) @ w
    up = (R - L) @ w
    # remove excess along l - r, add deficit along R - l
    scale = np.where(defect > 0, -defect / np.where(down > 0, down, 1.0), -defect / np.where(up > 0, up, 1.0))
    head = np.where((defect > 0)[:, None], L - r, R - L)
    return L + scale[:, None] * head, worst


def renormalize(space: StrategySpace, ell, r: float, R: float) -> tuple[LabelDensity, float]:
    out, corr = renormalize_rows(space.weights, _values(ell)[None, :], r, R)
    return LabelDensity(out[0], r, R), corr


def project_to_box(space: StrategySpace, Z: np.ndarray, r: float, R: float) -> np.ndarray:
    """Clipped exponential tilt of positive rows Z onto {mass 1, r <= l <= R}."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    return kernels.tilt_project(Z, space.weights, float(r), float(R))


def sample_densities(space: StrategySpace, n: int, r: float, R: float,
                     rng: np.random.Generator, concentration: float = 5.0) -> np.ndarray:
    """Dirichlet-like random densities projected into C_{r,R}."""
    G = rng.gamma(concentration, 1.0, size=(n, space.M)) + 1e-12
    return project_to_box(space, G / (G @ space.weights)[:, None], r, R)
