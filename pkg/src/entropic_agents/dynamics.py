"""Velocity fields, label-transfer operators and the entropic vector field."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from .errors import DimensionMismatch, InvalidBounds, NegativeRate
from .measures import AgentState, EmpiricalMeasure, w1
from .space import (
    BoxBounds,
    StrategySpace,
    entropy_bounds,
    lp_norms,
    resolve_omega,
    sample_densities,
    select_box_bounds,
)

log = logging.getLogger(__name__)

_E = math.e


def label_directions(space: StrategySpace, d: int) -> np.ndarray:
    """Unit vectors (cos 2 pi s, sin 2 pi s) per node, padded with zeros to R^d.

    ``s`` is the first node coordinate, or h/H on the discrete space.
    """
    s = space.nodes[:, 0] / space.M if space.metric == "discrete" else space.nodes[:, 0]
    out = np.zeros((space.M, d))
    out[:, 0] = np.cos(2 * np.pi * s)
    if d > 1:
        out[:, 1] = np.sin(2 * np.pi * s)
    return out


def _gram(X, Xs, width):
    if width == math.inf:
        return np.ones((X.shape[0], Xs.shape[0]))
    return kernels.gaussian_gram(X, Xs, float(width))


# ---------------------------------------------------------------------------
# payoffs
# ---------------------------------------------------------------------------


class ReplicatorKernel:
    """Full payoff J(x, u, x', u') = A[k, k'] g(x - x') with a Gaussian g of given width."""

    kind = "replicator_full"

    def __init__(self, A, width: float = math.inf):
        self.A = np.asarray(A, dtype=float)
        self.width = float(width)
        self.sup_J = float(np.abs(self.A).max()) if self.A.size else 0.0

    @classmethod
    def cosine(cls, space: StrategySpace, scale: float = 1.0, width: float = 1.0) -> "ReplicatorKernel":
        s = space.nodes[:, 0] / (space.M if space.metric == "discrete" else 1.0)
        return cls(scale * np.cos(2 * np.pi * (s[:, None] - s[None, :])), width)

    def payoff(self, space: StrategySpace, X, Xs, Ls) -> np.ndarray:
        """J_Psi(x_i, u_k) for Psi = (1/Ns) sum_j delta_{(xs_j, ls_j)}."""
        if self.A.shape != (space.M, space.M):
            raise DimensionMismatch("payoff matrix does not match the grid")
        G = _gram(X, Xs, self.width)
        return (G @ (Ls * space.weights)) @ self.A.T / Xs.shape[0]


class CallableReplicatorKernel:
    """Full payoff from a broadcasting callable J(x, u, x', u') with a declared sup |J|."""

    kind = "replicator_full"

    def __init__(self, J: Callable, sup_J: float):
        self.J = J
        self.sup_J = float(sup_J)

    def payoff(self, space, X, Xs, Ls):
        U = space.nodes
        Jv = self.J(X[:, None, None, None, :], U[None, :, None, None, :],
                    Xs[None, None, :, None, :], U[None, None, None, :, :])
        Jv = np.broadcast_to(Jv, (X.shape[0], space.M, Xs.shape[0], space.M))
        return np.einsum("ikjl,jl,l->ik", Jv, Ls, space.weights) / Xs.shape[0]


class AlignmentPayoff:
    """Undisclosed payoff J(x, u, x') = scale <dir(u), x' - x> g(x - x') / (w e^{-1/2}).

    Strategy u points in direction dir(u); it pays to point towards nearby
    opponents. The normalization makes sup |J| = scale.
    """

    def __init__(self, scale: float = 1.0, width: float = 1.0):
        self.scale = float(scale)
        self.width = float(width)
        self.sup_J = abs(self.scale)
        self._dirs: dict = {}

    def payoff(self, space, X, Xs):
        D = kernels.alignment_drift(X, Xs, self.width)
        key = (space.metric, space.nodes.tobytes(), X.shape[1])
        dirs = self._dirs.get(key)
        if dirs is None:
            dirs = self._dirs[key] = label_directions(space, X.shape[1])
        return (self.scale / (self.width * math.exp(-0.5))) * (D @ dirs.T)


class ProfilePayoff:
    """Undisclosed payoff J(x, u_k, x') = a_k g(x - x'), g Gaussian (g = 1 for infinite width)."""

    def __init__(self, values, width: float = math.inf):
        self.values = np.asarray(values, dtype=float)
        self.width = float(width)
        self.sup_J = float(np.abs(self.values).max())

    def payoff(self, space, X, Xs):
        if self.values.shape != (space.M,):
            raise DimensionMismatch("profile must have one value per node")
        g = _gram(X, Xs, self.width).mean(axis=1)
        return g[:, None] * self.values[None, :]


class CallablePayoff:
    """Undisclosed payoff from a broadcasting callable J(x, u, x')."""

    def __init__(self, J: Callable, sup_J: float):
        self.J = J
        self.sup_J = float(sup_J)

    def payoff(self, space, X, Xs):
        Jv = self.J(X[:, None, None, :], space.nodes[None, :, None, :], Xs[None, None, :, :])
        return np.broadcast_to(Jv, (X.shape[0], space.M, Xs.shape[0])).mean(axis=2)


class LinearKernel:
    """F_nu(x, xi, u) = -J_nu(x, u) xi: the undisclosed replicator."""

    kind = "undisclosed"
    linear = True

    def __init__(self, payoff):
        self.source = payoff
        self.C_F = payoff.sup_J
        self.C_F_prime = 0.0

    def payoff(self, space, X, Xs):
        return self.source.payoff(space, X, Xs)

    def dF(self, space, X, Xi, Xs):
        return -self.payoff(space, X, Xs)

    def F(self, space, X, Xi, Xs):
        return -self.payoff(space, X, Xs) * Xi


class PenalizedKernel:
    """F_nu = -J_nu(x, u) xi + c (xi - log(1 + xi)): frequently played strategies are penalized."""

    kind = "penalized"
    linear = False

    def __init__(self, payoff, c: float):
        if c < 0:
            raise InvalidBounds("penalty strength must be non-negative")
        self.source = payoff
        self.c = float(c)
        self.C_F = payoff.sup_J + self.c
        self.C_F_prime = self.c

    def dF(self, space, X, Xi, Xs):
        return -self.source.payoff(space, X, Xs) + self.c * Xi / (1.0 + Xi)

    def F(self, space, X, Xi, Xs):
        return -self.source.payoff(space, X, Xs) * Xi + self.c * (Xi - np.log1p(Xi))


class IntegralKernel:
    """F_nu(x, xi, u) = int_0^xi int f(x, s, u, x') dnu(x') ds by Gauss-Legendre quadrature.

    ``f_nu(space, X, Xi, Xs)`` returns the nu-average of f at each (x_i, xi_ik, u_k).
    """

    kind = "integral_f"
    linear = False

    def __init__(self, f_nu: Callable, C_F: float, C_F_prime: float, order: int = 16):
        self.f_nu = f_nu
        self.C_F = float(C_F)
        self.C_F_prime = float(C_F_prime)
        self._s, self._q = np.polynomial.legendre.leggauss(order)

    @classmethod
    def tanh(cls, payoff, c: float, width: float = 1.0) -> "IntegralKernel":
        """f(x, xi, u, x') = -J(x, u, x') + c g(x - x') tanh(xi): crowding-sensitive payoff."""

        def f_nu(space, X, Xi, Xs):
            g = _gram(X, Xs, width).mean(axis=1)
            return -payoff.payoff(space, X, Xs) + c * g[:, None] * np.tanh(Xi)

        kern = cls(f_nu, payoff.sup_J + abs(c), abs(c))
        kern.source = payoff
        return kern

    def dF(self, space, X, Xi, Xs):
        return self.f_nu(space, X, Xi, Xs)

    def F(self, space, X, Xi, Xs):
        out = np.zeros_like(Xi)
        for s, q in zip(self._s, self._q):
            out += q * self.f_nu(space, X, 0.5 * (s + 1.0) * Xi, Xs)
        return 0.5 * Xi * out


# ---------------------------------------------------------------------------
# Markov switching rates
# ---------------------------------------------------------------------------


class MarkovRates:
    """Switch rates alpha_hk(x, Psi) >= 0 (h != k) on the discrete label space.

    ``base[h, k]`` is the rate from h to k. With ``imitation > 0`` the rate into
    k is modulated by how strongly nearby agents hold k:
    alpha_hk = base_hk (1 + imitation tanh(sum_j g(x - x_j) l_j(k) / N)).
    """

    def __init__(self, base, imitation: float = 0.0, width: float = 1.0):
        base = np.array(base, dtype=float)
        if base.ndim != 2 or base.shape[0] != base.shape[1]:
            raise DimensionMismatch("rate matrix must be square")
        np.fill_diagonal(base, 0.0)
        if np.any(base < 0):
            raise NegativeRate("off-diagonal switch rates must be non-negative")
        if imitation < 0:
            raise NegativeRate("imitation strength must be non-negative")
        self.base = base
        self.imitation = float(imitation)
        self.width = float(width)

    @property
    def H(self) -> int:
        return self.base.shape[0]

    @property
    def bound(self) -> np.ndarray:
        return self.base * (1.0 + self.imitation)

    def matrix(self, space, X, Xs, Ls) -> np.ndarray:
        """(n, H, H) off-diagonal rates; zero diagonal."""
        n = X.shape[0]
        if self.imitation == 0.0:
            return np.broadcast_to(self.base, (n, self.H, self.H)).copy()
        G = _gram(X, Xs, self.width)
        pull = np.tanh(G @ Ls / Xs.shape[0])
        return self.base[None, :, :] * (1.0 + self.imitation * pull[:, None, :])

    @staticmethod
    def diagonal(space: StrategySpace, A: np.ndarray) -> np.ndarray:
        """alpha_hh making the adjoint generator mass-preserving w.r.t. eta.

        For uniform eta this is the total outflow rate sum_{k != h} alpha_hk.
        """
        w = space.weights
        return np.einsum("nhk,k->nh", A, w) / w


# ---------------------------------------------------------------------------
# label-transfer operators
# ---------------------------------------------------------------------------


class Operator:
    """Base class: ``raw`` computes T_Psi(y) row-wise; calling it also removes the quadrature mean."""

    kind = "zero"
    C_T = 0.0
    omega = "linear"

    def raw(self, space, X, L, Xs, Ls) -> np.ndarray:
        return np.zeros_like(L)

    def __call__(self, space, X, L, Xs, Ls) -> tuple[np.ndarray, float]:
        T = self.raw(space, X, L, Xs, Ls)
        mean = T @ space.weights
        resid = float(np.abs(mean).max()) if mean.size else 0.0
        if resid > 0.0:
            log.debug("operator %s: zero-mean residual %.3e removed", self.kind, resid)
            T = T - mean[:, None]
        return T, resid


class ZeroOperator(Operator):
    pass


class ReplicatorOperator(Operator):
    kind = "replicator"

    def __init__(self, kernel):
        self.kernel = kernel
        self.C_T = 2.0 * kernel.sup_J

    def raw(self, space, X, L, Xs, Ls):
        Jp = self.kernel.payoff(space, X, Xs, Ls)
        return (Jp - (Jp * L) @ space.weights[:, None]) * L


class UndisclosedOperator(Operator):
    """T = (int dF(x, l(u), u) l(u) deta - dF(x, l, .)) l."""

    kind = "undisclosed"

    def __init__(self, kernel):
        self.kernel = kernel
        self.C_T = 2.0 * kernel.C_F

    def raw(self, space, X, L, Xs, Ls=None):
        D = self.kernel.dF(space, X, L, Xs)
        return ((D * L) @ space.weights[:, None] - D) * L


class MarkovOperator(Operator):
    kind = "markov"

    def __init__(self, rates: MarkovRates, space: StrategySpace | None = None):
        self.rates = rates
        B = rates.bound
        if space is None:
            diag = B.sum(axis=1)
        else:
            diag = MarkovRates.diagonal(space, B[None])[0]
        # (T3): the inflow bounds T from above, the outflow bounds its negative part
        self.C_T = float(max(diag.max(), B.sum(axis=0).max(), 0.0))

    def raw(self, space, X, L, Xs, Ls):
        if space.M != self.rates.H:
            raise DimensionMismatch("rates do not match the label count")
        A = self.rates.matrix(space, X, Xs, Ls)
        diag = MarkovRates.diagonal(space, A)
        return -diag * L + np.einsum("nkh,nk->nh", A, L)


# ---------------------------------------------------------------------------
# velocity fields
# ---------------------------------------------------------------------------


class VelocityField:
    """v_Psi(y) evaluated row-wise; ``M_v`` is the declared sublinearity constant."""

    M_v = 0.0
    name = "zero"

    def __call__(self, space, X, L, Xs, Ls) -> np.ndarray:
        return np.zeros_like(X)

    def __add__(self, other: "VelocityField") -> "SumVelocity":
        return SumVelocity([self, other])


class ZeroVelocity(VelocityField):
    pass


class ConstantVelocity(VelocityField):
    name = "constant"

    def __init__(self, c):
        self.c = np.atleast_1d(np.asarray(c, dtype=float))
        self.M_v = float(np.linalg.norm(self.c))

    def __call__(self, space, X, L, Xs, Ls):
        if self.c.shape[0] != X.shape[1]:
            raise DimensionMismatch("constant velocity has the wrong dimension")
        return np.broadcast_to(self.c, X.shape).copy()


class AttractionVelocity(VelocityField):
    """v = gain int (x' - x) dnu(x'); a negative gain makes the crowd disperse."""

    name = "attraction"

    def __init__(self, gain: float = 1.0):
        self.gain = float(gain)
        self.M_v = abs(self.gain)

    def __call__(self, space, X, L, Xs, Ls):
        return self.gain * (Xs.mean(axis=0)[None, :] - X)


class SteeringVelocity(VelocityField):
    """v = speed (cos 2 pi s, sin 2 pi s) with s = int u l(u) deta the mean strategy."""

    name = "steering"

    def __init__(self, speed: float = 1.0):
        self.speed = float(speed)
        self.M_v = abs(self.speed)

    def __call__(self, space, X, L, Xs, Ls):
        s = L @ (space.weights * space.nodes[:, 0])
        if space.metric == "discrete":
            s = s / space.M
        out = np.zeros_like(X)
        out[:, 0] = self.speed * np.cos(2 * np.pi * s)
        if X.shape[1] > 1:
            out[:, 1] = self.speed * np.sin(2 * np.pi * s)
        return out


class SuperlinearVelocity(VelocityField):
    """v = c x ||y||; violates the linear growth condition on purpose."""

    name = "superlinear"

    def __init__(self, c: float = 1.0):
        self.c = float(c)
        self.M_v = abs(self.c)

    def __call__(self, space, X, L, Xs, Ls):
        nrm = np.linalg.norm(X, axis=1) + lp_norms(space, L)
        return self.c * X * nrm[:, None]


class CallableVelocity(VelocityField):
    name = "callable"

    def __init__(self, fn: Callable, M_v: float):
        self.fn = fn
        self.M_v = float(M_v)

    def __call__(self, space, X, L, Xs, Ls):
        return np.asarray(self.fn(space, X, L, Xs, Ls), dtype=float)


class SumVelocity(VelocityField):
    name = "sum"

    def __init__(self, terms):
        self.terms = list(terms)
        self.M_v = float(sum(t.M_v for t in self.terms))

    def __call__(self, space, X, L, Xs, Ls):
        out = np.zeros_like(X)
        for t in self.terms:
            out += t(space, X, L, Xs, Ls)
        return out


# ---------------------------------------------------------------------------
# entropic field and its constants
# ---------------------------------------------------------------------------


def _upper_case_root(box: BoxBounds, C_T: float, omega_R: float, k: float) -> float:
    """R' below which ell + theta h(ell) <= R needs a step restriction.

    h(t) = C_T omega(R) + eps t (k - log t) is decreasing for t > e^{k-1} and
    negative at R, so on [R', R] the upper bound is kept for any step.
    """
    eps, r, R = box.eps, box.r_eps, box.R_eps

    def h(t):
        return C_T * omega_R + eps * t * (k - math.log(t))

    lo = max(math.exp(k - 1.0), r)
    if h(lo) <= 0.0:
        return lo
    hi = R
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if h(mid) > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * R:
            break
    return hi


def step_bound_theta(eps: float, box: BoxBounds, C_T: float | None = None, omega=None) -> float:
    """theta_eps = min(theta_1, theta_2) from the upper- and lower-bound cases."""
    C_T = box.C_T if C_T is None else C_T
    _, om = resolve_omega(box.omega if omega is None else omega)
    r, R = box.r_eps, box.R_eps
    k = entropy_bounds(r, R).k
    omR = om(R)
    Rp = _upper_case_root(BoxBounds(r, R, eps, C_T, box.omega), C_T, omR, k)
    theta1 = (R - Rp) / (C_T * omR + eps * R * k + eps / _E)
    theta2 = (r / 3.0) / (C_T * omR + eps * R * math.log(R))
    return min(theta1, theta2)


@dataclass(eq=False)
class EntropicSystem:
    """b^eps_Psi(y) = (v_Psi(y), lam (T_Psi(y) + eps H(l))) with its certified box and step bound."""

    space: StrategySpace
    velocity: VelocityField
    operator: Operator
    eps: float
    lam: float = 1.0
    C_T: float | None = None
    omega: str = "linear"
    box: BoxBounds = field(init=False)
    theta: float = field(init=False)

    def __post_init__(self):
        if not (self.eps > 0):
            raise InvalidBounds("eps must be positive: the entropic box is undefined at eps = 0")
        if not (self.lam > 0):
            raise InvalidBounds("lambda must be positive")
        if self.space.p == math.inf:
            raise InvalidBounds("the dynamics need a finite exponent p")
        if self.C_T is None:
            self.C_T = float(self.operator.C_T)
        self.box = select_box_bounds(self.eps, self.C_T, self.omega)
        self.theta = step_bound_theta(self.eps, self.box, self.C_T, self.omega)

    @property
    def M_eps(self) -> float:
        """Sublinearity constant of the lambda-scaled field."""
        r, R = self.box.r_eps, self.box.R_eps
        k = entropy_bounds(r, R).k
        om = self.box.omega_fn
        label = self.C_T * om(R) + self.eps * max(R * math.log(R), R * k + 1.0 / _E)
        return self.lam * label + self.velocity.M_v

    def with_lambda(self, lam: float) -> "EntropicSystem":
        return EntropicSystem(self.space, self.velocity, self.operator, self.eps, lam, self.C_T, self.omega)

    def field(self, X, L, Xs=None, Ls=None) -> tuple[np.ndarray, np.ndarray, float]:
        """Drift of every row of (X, L); Psi defaults to the empirical measure of the rows."""
        if Xs is None:
            Xs, Ls = X, L
        dX = self.velocity(self.space, X, L, Xs, Ls)
        T, resid = self.operator(self.space, X, L, Xs, Ls)
        _, H = kernels.entropy_drift(L, self.space.weights)
        dL = self.lam * (T + self.eps * H)
        return dX, dL, resid


def entropic_field(space: StrategySpace, v: VelocityField, T: Operator, Psi: EmpiricalMeasure,
                   y: AgentState, eps: float, lam: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """(dx, dl) for one state; eps = 0 is accepted here and drops the entropy term."""
    X = y.x[None, :]
    L = y.ell.values[None, :]
    Ls = Psi.L if Psi.L is not None else np.zeros((Psi.N, space.M))
    dX = v(space, X, L, Psi.X, Ls)
    Tv, _ = T(space, X, L, Psi.X, Ls)
    dL = Tv
    if eps != 0.0:
        _, H = kernels.entropy_drift(L, space.weights)
        dL = Tv + eps * H
    return dX[0], lam * dL[0]


def replicator_operator(space, kernel, Psi: EmpiricalMeasure, y: AgentState) -> np.ndarray:
    return ReplicatorOperator(kernel)(space, y.x[None, :], y.ell.values[None, :], Psi.X, Psi.L)[0][0]


def undisclosed_operator(space, kernel, nu: EmpiricalMeasure, y: AgentState) -> np.ndarray:
    return UndisclosedOperator(kernel)(space, y.x[None, :], y.ell.values[None, :], nu.X, None)[0][0]


def markov_operator(space, rates: MarkovRates, Psi: EmpiricalMeasure, y: AgentState) -> np.ndarray:
    return MarkovOperator(rates, space)(space, y.x[None, :], y.ell.values[None, :], Psi.X, Psi.L)[0][0]


# ---------------------------------------------------------------------------
# assumption probes
# ---------------------------------------------------------------------------


@dataclass
class Check:
    name: str
    passed: bool
    value: float
    bound: float
    witness: dict | None = None

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "value": _num(self.value),
                "bound": _num(self.bound), "witness": self.witness}


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else str(x)


@dataclass
class AssumptionReport:
    checks: list[Check]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": [c.to_dict() for c in self.checks]}


def _ball(rng, n, d, rho):
    g = rng.standard_normal((n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * rho * rng.random((n, 1)) ** (1.0 / d)


def probe_assumptions(system: EntropicSystem, d: int, rng: np.random.Generator,
                      n_probes: int = 100, n_atoms: int = 8,
                      radii=(1.0, 10.0, 100.0), delta: float = 1e-4) -> AssumptionReport:
    """Monte-Carlo checks of growth, Lipschitz, zero-mean and pointwise conditions.

    Lipschitz-type conditions pass when every sampled difference quotient is
    finite; their largest value is reported as the empirical constant.
    """
    sp = system.space
    r, R = system.box.r_eps, system.box.R_eps
    om = system.box.omega_fn
    op, vel = system.operator, system.velocity
    growth, lip_v, lip_T = [], [], []
    worst_resid, up_excess, low_excess = 0.0, -math.inf, -math.inf
    growth_wit = up_wit = low_wit = None
    for rho in radii:
        for _ in range(max(1, n_probes // len(radii))):
            Xs = _ball(rng, n_atoms, d, rho)
            Ls = sample_densities(sp, n_atoms, r, R, rng)
            X = _ball(rng, 1, d, rho)
            L = sample_densities(sp, 1, r, R, rng)
            m1 = float(np.mean(np.linalg.norm(Xs, axis=1) + lp_norms(sp, Ls)))
            ynorm = float(np.linalg.norm(X) + lp_norms(sp, L)[0])
            v = vel(sp, X, L, Xs, Ls)[0]
            ratio = np.linalg.norm(v) / (1.0 + ynorm + m1)
            if not growth or ratio > max(growth):
                growth_wit = {"x": X[0].tolist(), "radius": rho}
            growth.append(ratio)
            T, resid = op(sp, X, L, Xs, Ls)
            worst_resid = max(worst_resid, resid)
            raw = op.raw(sp, X, L, Xs, Ls)[0]
            ue = float((raw - op.C_T * om(R)).max())
            le = float((np.maximum(-raw, 0.0) - op.C_T * np.array([om(t) for t in L[0]])).max())
            if ue > up_excess:
                up_excess, up_wit = ue, {"x": X[0].tolist(), "ell": L[0].tolist()}
            if le > low_excess:
                low_excess, low_wit = le, {"x": X[0].tolist(), "ell": L[0].tolist()}
            # difference quotients in y and in Psi
            X2 = X + delta * rng.standard_normal(X.shape)
            L2 = sample_densities(sp, 1, r, R, rng)
            L2 = (1 - delta) * L + delta * L2
            dy = float(np.linalg.norm(X - X2) + lp_norms(sp, L - L2)[0])
            Xs2 = Xs + delta * rng.standard_normal(Xs.shape)
            Ls2 = (1 - delta) * Ls + delta * sample_densities(sp, n_atoms, r, R, rng)
            dpsi, _ = w1(EmpiricalMeasure(Xs, Ls, sp), EmpiricalMeasure(Xs2, Ls2, sp))
            dv = np.linalg.norm(vel(sp, X, L, Xs, Ls) - vel(sp, X2, L2, Xs2, Ls2))
            T2, _ = op(sp, X2, L2, Xs2, Ls2)
            dT = lp_norms(sp, T - T2)[0]
            lip_v.append(dv / (dy + dpsi))
            lip_T.append(dT / (dy + dpsi))
    M_v = vel.M_v
    checks = [
        Check("v1-v2 Lipschitz (velocity)", bool(np.all(np.isfinite(lip_v))), float(np.max(lip_v)), math.inf),
        Check("v3 linear growth", bool(max(growth) <= M_v * (1 + 1e-9) + 1e-12), float(max(growth)), M_v,
              growth_wit if max(growth) > M_v * (1 + 1e-9) + 1e-12 else None),
        Check("T1 zero mean (raw residual)", worst_resid <= 1e-8, worst_resid, 1e-8),
        Check("T2 Lipschitz (operator)", bool(np.all(np.isfinite(lip_T))), float(np.max(lip_T)), math.inf),
        Check("T3 upper bound", up_excess <= 1e-10, up_excess, 0.0, up_wit if up_excess > 1e-10 else None),
        Check("T3 negative part", low_excess <= 1e-10, low_excess, 0.0, low_wit if low_excess > 1e-10 else None),
    ]
    kern = getattr(op, "kernel", None)
    if kern is not None and hasattr(kern, "dF"):
        checks.extend(_probe_F(sp, kern, d, rng, n_probes, n_atoms, r, R))
    return AssumptionReport(checks)


def _probe_F(sp, kern, d, rng, n_probes, n_atoms, r, R) -> list[Check]:
    """(F3) bound on dF and monotonicity of dF in xi (convexity of F)."""
    worst, worst_drop = 0.0, 0.0
    for _ in range(n_probes):
        Xs = _ball(rng, n_atoms, d, 3.0)
        X = _ball(rng, 1, d, 3.0)
        xi = np.sort(rng.uniform(r, R, size=(2, sp.M)), axis=0)
        D = kern.dF(sp, np.repeat(X, 2, axis=0), xi, Xs)
        worst = max(worst, float(np.abs(D).max()))
        worst_drop = max(worst_drop, float((D[0] - D[1]).max()))
    return [
        Check("F3 bounded derivative", worst <= kern.C_F * (1 + 1e-12) + 1e-12, worst, kern.C_F),
        Check("F convex in xi", worst_drop <= 1e-12, worst_drop, 0.0),
    ]
