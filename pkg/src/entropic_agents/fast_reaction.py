"""The entropic functional G, its minimizer map Delta and the fast-reaction limit."""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .dynamics import EntropicSystem, UndisclosedOperator, VelocityField
from .errors import DimensionMismatch, InsufficientSamples, InvariantViolation, MaxIterations, NonFiniteValue
from .measures import EmpiricalMeasure, w1
from .particles import ParticleEnsemble, integrate
from .space import BoxBounds, LabelDensity, StrategySpace, lp_norms

DEFAULT_TOL = 1e-10
MAX_ITER = 20000
_G_SLACK = 1e-13


@dataclass(frozen=True, eq=False)
class GProblem:
    """Minimize G_nu(x, l) over C_eps for one position x and spatial measure nu."""

    space: StrategySpace
    kernel: object
    nu: EmpiricalMeasure
    x: np.ndarray
    eps: float
    box: BoxBounds

    def __post_init__(self):
        object.__setattr__(self, "x", np.atleast_1d(np.asarray(self.x, dtype=float)))
        if self.nu.X.shape[1] != self.x.shape[0]:
            raise DimensionMismatch("position and measure dimensions differ")


@dataclass(frozen=True, eq=False)
class MinimizerCertificate:
    ell_star: LabelDensity
    residual: float
    beta_eps: float
    g_star: float
    gap_estimate: float
    iterations: int


def _g_rows(space, kernel, X, L, Xs, eps) -> np.ndarray:
    F = kernel.F(space, X, L, Xs)
    return (F + eps * L * (np.log(L) - 1.0)) @ space.weights


def g_value(problem: GProblem, ell) -> float:
    """sum_k eta_k (F_nu(x, l_k, u_k) + eps l_k (log l_k - 1))."""
    v = ell.values if isinstance(ell, LabelDensity) else np.asarray(ell, dtype=float)
    if np.any(v <= 0) or not np.all(np.isfinite(v)):
        raise NonFiniteValue("G needs strictly positive finite densities")
    val = _g_rows(problem.space, problem.kernel, problem.x[None, :], v[None, :], problem.nu.X, problem.eps)[0]
    if not math.isfinite(val):
        raise NonFiniteValue("G evaluated to a non-finite value")
    return float(val)


def minimize_rows(space: StrategySpace, kernel, X: np.ndarray, Xs: np.ndarray, eps: float,
                  r: float, R: float, tol: float = DEFAULT_TOL, L0: np.ndarray | None = None,
                  max_iter: int = MAX_ITER) -> tuple[np.ndarray, np.ndarray, int]:
    """Mirror descent with exact clipped-tilt projection, one problem per row of X.

    Starts from step s = R / (eps + C_F') and halves a row's step whenever the
    relative-smoothness descent test fails or the residual stops shrinking.
    Returns (L*, residuals, iterations).
    """
    w = space.weights
    n = X.shape[0]
    L = np.ones((n, space.M)) if L0 is None else np.array(L0, dtype=float)
    L = kernels.tilt_project(L, w, r, R)
    s = np.full(n, R / (eps + kernel.C_F_prime))
    G = _g_rows(space, kernel, X, L, Xs, eps)
    res = np.full(n, np.inf)
    done = np.zeros(n, dtype=bool)
    it = 0
    for it in range(1, max_iter + 1):
        grad = kernel.dF(space, X, L, Xs) + eps * np.log(L)
        logZ = np.log(L) - s[:, None] * grad
        Z = np.exp(logZ - logZ.max(axis=1, keepdims=True))
        Ln = kernels.tilt_project(Z, w, r, R)
        Gn = _g_rows(space, kernel, X, Ln, Xs, eps)
        D = Ln - L
        bregman = (Ln * np.log(Ln / L) - D) @ w
        model = G + (grad * D) @ w + bregman / s
        ok = Gn <= model + _G_SLACK * (1.0 + np.abs(G))
        step_res = np.sqrt((D**2) @ w) / s
        accept = ok & ~done
        # an accepted step that fails to shrink the residual signals a step too long to contract
        stall = accept & (step_res >= 0.99 * res)
        L[accept] = Ln[accept]
        G[accept] = Gn[accept]
        res[accept] = step_res[accept]
        done |= accept & (step_res <= tol)
        s[(~ok | stall) & ~done] *= 0.5
        if done.all():
            break
    if not done.all():
        raise MaxIterations(f"mirror descent did not reach tol={tol:.1e} in {max_iter} iterations",
                            best=L, residual=res)
    return L, res, it


def minimize_g(problem: GProblem, tol: float = DEFAULT_TOL, max_iter: int = MAX_ITER) -> MinimizerCertificate:
    if tol <= 0:
        raise ValueError("tol must be positive")
    b = problem.box
    L, res, it = minimize_rows(problem.space, problem.kernel, problem.x[None, :], problem.nu.X,
                               problem.eps, b.r_eps, b.R_eps, tol, max_iter=max_iter)
    beta = problem.eps / b.R_eps
    ell = LabelDensity(L[0], b.r_eps, b.R_eps)
    return MinimizerCertificate(ell, float(res[0]), beta, g_value(problem, ell),
                                float(res[0]) ** 2 / (2.0 * beta), it)


def gibbs_reference(problem: GProblem) -> tuple[LabelDensity, bool]:
    """exp(J_nu(x, .) / eps) normalized; clipped tilt when it leaves the box.

    Only defined for kernels linear in xi. The flag reports whether clipping was needed.
    """
    kern = problem.kernel
    if not getattr(kern, "linear", False):
        raise ValueError("the Gibbs reference needs a kernel linear in xi")
    sp, b = problem.space, problem.box
    J = kern.payoff(sp, problem.x[None, :], problem.nu.X)[0]
    z = np.exp((J - J.max()) / problem.eps)
    ell = z / (sp.weights @ z)
    if ell.min() >= b.r_eps and ell.max() <= b.R_eps:
        return LabelDensity(ell, b.r_eps, b.R_eps), False
    out = kernels.tilt_project(ell[None, :], sp.weights, b.r_eps, b.R_eps)[0]
    return LabelDensity(out, b.r_eps, b.R_eps), True


class DeltaMap:
    """Memoized Delta(x, nu) = argmin G_nu(x, .); the cache is guarded by a lock."""

    def __init__(self, space: StrategySpace, kernel, eps: float, box: BoxBounds, tol: float = DEFAULT_TOL):
        self.space, self.kernel, self.eps, self.box, self.tol = space, kernel, eps, box, tol
        self._cache: dict = {}
        self._lock = threading.Lock()

    def __call__(self, x, nu: EmpiricalMeasure) -> LabelDensity:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        key = (x.tobytes(), nu.X.tobytes(), nu.X.shape)
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        cert = minimize_g(GProblem(self.space, self.kernel, nu, x, self.eps, self.box), self.tol)
        with self._lock:
            self._cache.setdefault(key, cert.ell_star)
        return cert.ell_star

    def rows(self, X, Xs, L0=None) -> np.ndarray:
        """Delta(x_i, nu) for every row of X (not cached)."""
        b = self.box
        return minimize_rows(self.space, self.kernel, X, Xs, self.eps, b.r_eps, b.R_eps, self.tol, L0)[0]

    def cache_size(self) -> int:
        return len(self._cache)


def delta_map(space, kernel, nu, x, eps, box, tol=DEFAULT_TOL) -> LabelDensity:
    return minimize_g(GProblem(space, kernel, nu, x, eps, box), tol).ell_star


def limit_velocity(space: StrategySpace, v: VelocityField, kernel, nu: EmpiricalMeasure, x,
                   eps: float, box: BoxBounds, tol: float = DEFAULT_TOL) -> np.ndarray:
    """w_nu(x) = v evaluated at (x, Delta(x, nu)) against (id, Delta(., nu))_# nu."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    dm = DeltaMap(space, kernel, eps, box, tol)
    Ls = dm.rows(nu.X, nu.X)
    L = dm.rows(x[None, :], nu.X)
    out = v(space, x[None, :], L, nu.X, Ls)[0]
    M_w = v.M_v * (1.0 + box.R_eps)
    m1 = float(np.linalg.norm(nu.X, axis=1).mean())
    if np.linalg.norm(out) > M_w * (1.0 + np.linalg.norm(x) + m1) * (1 + 1e-12):
        raise InvariantViolation("limit velocity exceeds its linear-growth bound")
    return out


@dataclass(frozen=True, eq=False)
class LimitTrajectory:
    times: np.ndarray
    X: np.ndarray  # (S, N, d)
    L: np.ndarray  # (S, N, M), Delta(x_i(t), mu_t)
    bound: float
    dt: float


def _limit_rhs(system: EntropicSystem, dm: DeltaMap, X, warm):
    L = dm.rows(X, X, warm)
    return system.velocity(system.space, X, L, X, L), L


def integrate_limit(system: EntropicSystem, x0: np.ndarray, T: float, dt: float | None = None,
                    sample_times=None, n_samples: int = 101, method: str = "rk4",
                    tol: float = 1e-12) -> LimitTrajectory:
    """Integrate x_i' = w_{mu^N}(x_i) with Delta recomputed at every stage."""
    kern = getattr(system.operator, "kernel", None)
    if not isinstance(system.operator, UndisclosedOperator):
        raise ValueError("the fast-reaction limit needs an undisclosed operator")
    dm = DeltaMap(system.space, kern, system.eps, system.box, tol)
    X = np.atleast_2d(np.asarray(x0, dtype=float)).copy()
    if sample_times is None:
        sample_times = np.linspace(0.0, T, n_samples) if T > 0 else np.array([0.0])
    sample_times = np.asarray(sample_times, dtype=float)
    if dt is None:
        dt = T / 1000.0 if T > 0 else 1.0
    M_w = system.velocity.M_v * (1.0 + system.box.R_eps)
    MT = M_w * (sample_times[-1] - sample_times[0])
    bound = math.inf if 2 * MT > 700 else (np.linalg.norm(X, axis=1).max() + MT) * math.exp(2 * MT)
    warm = dm.rows(X, X)
    Xs, Ls = [X.copy()], [warm.copy()]
    t = sample_times[0]
    for t_next in sample_times[1:]:
        n = max(1, int(math.ceil((t_next - t) / dt - 1e-9)))
        h = (t_next - t) / n
        for _ in range(n):
            k1, warm = _limit_rhs(system, dm, X, warm)
            if method == "euler":
                X = X + h * k1
                continue
            k2, _ = _limit_rhs(system, dm, X + 0.5 * h * k1, warm)
            k3, _ = _limit_rhs(system, dm, X + 0.5 * h * k2, warm)
            k4, _ = _limit_rhs(system, dm, X + h * k3, warm)
            X = X + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t_next
        if np.linalg.norm(X, axis=1).max() > bound:
            raise InvariantViolation(f"limit trajectory exceeds its a-priori bound at t={t:.4g}")
        warm = dm.rows(X, X, warm)
        Xs.append(X.copy())
        Ls.append(warm.copy())
    return LimitTrajectory(sample_times, np.stack(Xs), np.stack(Ls), float(bound), float(dt))


# ---------------------------------------------------------------------------
# rate studies
# ---------------------------------------------------------------------------


def _fit(x, y) -> tuple[float, float, float, float]:
    """Least-squares line y = a x + b; returns (a, b, rms residual, R^2)."""
    a, b = np.polyfit(x, y, 1)
    pred = a * x + b
    ss_res = float(((y - pred) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(a), float(b), math.sqrt(ss_res / len(x)), r2


@dataclass
class RateFit:
    lambdas: np.ndarray
    gaps: np.ndarray
    slope: float
    intercept: float
    residual: float
    r2: float
    p: float
    t_burn: float
    monotone: bool
    x_gaps: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def expected_slope(self) -> float:
        return -0.5 if self.p <= 2 else -1.0 / self.p

    def to_dict(self) -> dict:
        return {
            "lambdas": self.lambdas.tolist(),
            "gaps": self.gaps.tolist(),
            "position_gaps": self.x_gaps.tolist(),
            "slope": self.slope,
            "intercept": self.intercept,
            "residual": self.residual,
            "r2": self.r2,
            "p": self.p,
            "t_burn": self.t_burn,
            "expected_slope": self.expected_slope(),
            "monotone": self.monotone,
        }


def gap_monotone(lambdas, gaps, slack: float = 0.1) -> bool:
    """gap(l2) <= gap(l1) (1 + slack) whenever l2 >= 4 l1."""
    for i, l1 in enumerate(lambdas):
        for j, l2 in enumerate(lambdas):
            if l2 >= 4 * l1 and gaps[j] > gaps[i] * (1 + slack):
                return False
    return True


def fast_reaction_study(system: EntropicSystem, X0: np.ndarray, lambdas, T: float = 1.0,
                        t_burn: float | None = None, n_samples: int = 51, initial: str = "minimizer",
                        L0: np.ndarray | None = None, method: str = "rk4",
                        tol: float = 1e-12) -> RateFit:
    """Compare the lambda-scaled system with the limit system for several lambda.

    gap(lambda) = sup over sample times t >= t_burn of the agent-mean of
    ||(x_lam - x, l_lam - Delta(x, mu_t))||.
    """
    lambdas = np.asarray(sorted(lambdas), dtype=float)
    if lambdas.size < 4 or lambdas[-1] / lambdas[0] < 100:
        raise InsufficientSamples("need at least 4 lambdas spanning 2 decades")
    t_burn = T / 10.0 if t_burn is None else t_burn
    times = np.linspace(0.0, T, n_samples)
    lim = integrate_limit(system, X0, T, sample_times=times, tol=tol)
    if initial == "minimizer":
        L_init = lim.L[0]
    elif initial == "given":
        L_init = np.asarray(L0, dtype=float)
    else:
        raise ValueError(f"unknown initial label policy {initial!r}")
    keep = times >= t_burn - 1e-12
    sp = system.space
    gaps, xg = [], []
    for lam in lambdas:
        sys_l = system.with_lambda(float(lam))
        traj = integrate(ParticleEnsemble(sys_l, X0, L_init), T, method=method, sample_times=times)
        dx = np.linalg.norm(traj.X - lim.X, axis=2)
        S, N, M = traj.L.shape
        dl = lp_norms(sp, (traj.L - lim.L).reshape(S * N, M)).reshape(S, N)
        per_t = (dx + dl).mean(axis=1)
        gaps.append(float(per_t[keep].max()))
        xg.append(float(dx.mean(axis=1)[keep].max()))
    gaps = np.array(gaps)
    a, b, res, r2 = _fit(np.log(lambdas), np.log(gaps))
    return RateFit(lambdas, gaps, a, b, res, r2, sp.p, t_burn, gap_monotone(lambdas, gaps), np.array(xg))


@dataclass
class MeanFieldTable:
    Ns: list[int]
    sup_w1: np.ndarray
    init_w1: np.ndarray
    rho: np.ndarray

    def inversions(self) -> int:
        return int(np.sum(np.diff(self.sup_w1) > 0))

    def rho_spread(self) -> float:
        good = self.rho[np.isfinite(self.rho)]
        return float(good.max() / good.min()) if good.size else math.nan

    @property
    def cauchy_ok(self) -> bool:
        return self.inversions() <= 1

    @property
    def stable_ok(self) -> bool:
        s = self.rho_spread()
        return bool(math.isfinite(s) and s <= 3.0)

    def rows(self) -> list[dict]:
        return [{"N": n, "N2": 2 * n, "sup_w1": float(s), "w1_initial": float(i), "rho": float(r)}
                for n, s, i, r in zip(self.Ns, self.sup_w1, self.init_w1, self.rho)]


def mean_field_study(system: EntropicSystem, X_pool: np.ndarray, L_pool: np.ndarray, Ns,
                     T: float = 1.0, n_samples: int = 21, method: str = "rk4") -> MeanFieldTable:
    """Cauchy study over nested initial data: the first N pool atoms form the N-agent datum.

    rho_N = sup_t W1(Lambda^N_t, Lambda^{2N}_t) / W1(Lambda^N_0, Lambda^{2N}_0).
    """
    Ns = sorted(int(n) for n in Ns)
    if len(Ns) < 2:
        raise InsufficientSamples("need at least two ensemble sizes")
    need = 2 * Ns[-1]
    if X_pool.shape[0] < need:
        raise InsufficientSamples(f"the pool holds {X_pool.shape[0]} atoms, {need} required")
    times = np.linspace(0.0, T, n_samples)
    sizes = sorted(set(Ns) | {2 * n for n in Ns})
    trajs = {n: integrate(ParticleEnsemble(system, X_pool[:n], L_pool[:n]), T, method=method,
                          sample_times=times) for n in sizes}
    sp = system.space
    sup_w1, init_w1, rho = [], [], []
    for n in Ns:
        a, b = trajs[n], trajs[2 * n]
        ds = [w1(EmpiricalMeasure(a.X[s], a.L[s], sp), EmpiricalMeasure(b.X[s], b.L[s], sp))[0]
              for s in range(times.size)]
        sup_w1.append(max(ds))
        init_w1.append(ds[0])
        rho.append(max(ds) / ds[0] if ds[0] > 0 else math.nan)
    return MeanFieldTable(Ns, np.array(sup_w1), np.array(init_w1), np.array(rho))
