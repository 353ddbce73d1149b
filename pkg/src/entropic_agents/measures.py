"""Uniform atomic measures on the state space, W1 distances and first moments."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .errors import DimensionMismatch, EmptyMeasure, InvalidBounds, WitnessNotLipschitz
from .space import LabelDensity, StrategySpace, lp_norms

MAX_REPLICATED_ATOMS = 10**6


@dataclass(frozen=True, eq=False)
class AgentState:
    """A single state y = (x, l)."""

    x: np.ndarray
    ell: LabelDensity

    def __post_init__(self):
        object.__setattr__(self, "x", np.atleast_1d(np.asarray(self.x, dtype=float)))


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """(1/N) sum_i delta_{y_i}; ``L is None`` marks a spatial measure on R^d."""

    X: np.ndarray
    L: np.ndarray | None = None
    space: StrategySpace | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        object.__setattr__(self, "X", X)
        if self.L is not None:
            L = np.atleast_2d(np.asarray(self.L, dtype=float))
            if self.space is None:
                raise DimensionMismatch("a product-space measure needs its StrategySpace")
            if L.shape != (X.shape[0], self.space.M):
                raise DimensionMismatch(f"labels {L.shape} do not match {X.shape[0]} atoms x {self.space.M} nodes")
            object.__setattr__(self, "L", L)

    @classmethod
    def from_states(cls, space: StrategySpace, states: Sequence[AgentState]) -> "EmpiricalMeasure":
        if not states:
            raise EmptyMeasure("no atoms")
        return cls(np.stack([s.x for s in states]), np.stack([s.ell.values for s in states]), space)

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def is_spatial(self) -> bool:
        return self.L is None

    def norms(self) -> np.ndarray:
        """||y_i|| = |x_i| + ||l_i||_{L^p} per atom (|x_i| for spatial measures)."""
        out = np.linalg.norm(self.X, axis=1)
        if self.L is not None:
            out = out + lp_norms(self.space, self.L)
        return out

    def atom(self, i: int) -> AgentState:
        if self.L is None:
            raise DimensionMismatch("spatial measures have no label component")
        return AgentState(self.X[i], LabelDensity(self.L[i]))


@dataclass(frozen=True, eq=False)
class TransportPlan:
    sigma: np.ndarray
    costs: np.ndarray
    cost: float

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "sigma_i", "cost_i"])
            for i, (j, c) in enumerate(zip(self.sigma, self.costs)):
                w.writerow([i, int(j), repr(float(c))])


def state_distance(space: StrategySpace, y1: AgentState, y2: AgentState, p: float | None = None) -> float:
    """|x1 - x2| + ||l1 - l2||_{L^p}."""
    if y1.x.shape != y2.x.shape or y1.ell.values.shape != y2.ell.values.shape:
        raise DimensionMismatch("states live in different spaces")
    diff = (y1.ell.values - y2.ell.values)[None, :]
    return float(np.linalg.norm(y1.x - y2.x) + lp_norms(space, diff, p)[0])


def pairwise_cost(mu1: EmpiricalMeasure, mu2: EmpiricalMeasure) -> np.ndarray:
    if mu1.is_spatial != mu2.is_spatial:
        raise DimensionMismatch("cannot compare a spatial measure with a product measure")
    if mu1.X.shape[1] != mu2.X.shape[1]:
        raise DimensionMismatch("position dimensions differ")
    if mu1.is_spatial:
        return kernels.cost_matrix(mu1.X, np.zeros((mu1.N, 0)), mu2.X, np.zeros((mu2.N, 0)),
                                   np.zeros(0), 1.0)
    if mu1.L.shape[1] != mu2.L.shape[1]:
        raise DimensionMismatch("label grids differ")
    return kernels.cost_matrix(mu1.X, mu1.L, mu2.X, mu2.L, mu1.space.weights, float(mu1.space.p))


def w1(mu1: EmpiricalMeasure, mu2: EmpiricalMeasure) -> tuple[float, TransportPlan]:
    """Exact W1 between uniform atomic measures via optimal assignment.

    Measures with different atom counts are compared after replicating every
    atom so both sides have lcm(N1, N2) atoms of equal mass.
    """
    if mu1.N == 0 or mu2.N == 0:
        raise EmptyMeasure("W1 needs non-empty measures")
    C = pairwise_cost(mu1, mu2)
    n = math.lcm(mu1.N, mu2.N)
    if n * max(mu1.N, mu2.N) > MAX_REPLICATED_ATOMS:
        raise InvalidBounds(f"replicating to {n} atoms exceeds the size guard")
    if n != mu1.N or n != mu2.N:
        C = np.repeat(np.repeat(C, n // mu1.N, axis=0), n // mu2.N, axis=1)
    sigma = kernels.hungarian(np.ascontiguousarray(C))
    costs = C[np.arange(n), sigma]
    value = float(costs.sum() / n)
    return value, TransportPlan(np.asarray(sigma), costs, value)


def w1_dual_check(mu1: EmpiricalMeasure, mu2: EmpiricalMeasure,
                  witnesses: Sequence[Callable[[np.ndarray, np.ndarray | None], np.ndarray]],
                  tol: float = 1e-12) -> float:
    """Best lower bound max_phi (int phi dmu1 - int phi dmu2) over 1-Lipschitz witnesses.

    Each witness maps (X, L) to one value per atom and is certified 1-Lipschitz on
    the union of atoms before use.
    """
    if mu1.N == 0 or mu2.N == 0:
        raise EmptyMeasure("dual check needs non-empty measures")
    X = np.vstack([mu1.X, mu2.X])
    L = None if mu1.is_spatial else np.vstack([mu1.L, mu2.L])
    both = EmpiricalMeasure(X, L, mu1.space)
    D = pairwise_cost(both, both)
    best = 0.0 if not witnesses else -math.inf
    for phi in witnesses:
        vals = np.asarray(phi(X, L), dtype=float)
        if np.any(np.abs(vals[:, None] - vals[None, :]) > D * (1 + tol) + tol):
            raise WitnessNotLipschitz(f"witness {getattr(phi, '__name__', phi)!r} is not 1-Lipschitz on the atoms")
        best = max(best, float(vals[: mu1.N].mean() - vals[mu1.N:].mean()))
    return best


def first_moment(mu: EmpiricalMeasure) -> float:
    if mu.N == 0:
        raise EmptyMeasure("first moment of an empty measure")
    return float(mu.norms().mean())


def spatial_marginal(mu: EmpiricalMeasure) -> EmpiricalMeasure:
    return EmpiricalMeasure(mu.X.copy())


def ensemble_distance(space: StrategySpace, X1, L1, X2, L2) -> float:
    """(1/N) sum_i ||y1_i - y2_i||, the norm on the N-fold product."""
    return float(np.mean(np.linalg.norm(X1 - X2, axis=1) + lp_norms(space, L1 - L2)))
