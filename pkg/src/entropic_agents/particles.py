"""N-agent integrator for the entropic system with invariant monitoring."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import EntropicSystem
from .errors import (
    BoxViolation,
    DimensionMismatch,
    InvariantViolation,
    StageLeftBox,
    StepTooLarge,
)
from .measures import EmpiricalMeasure
from .space import entropy_bounds, lp_norms, renormalize_rows

_STEP_SLACK = 1e-12
TOL_MASS_DRIFT = 1e-8


@dataclass(frozen=True)
class StepDiagnostics:
    mass_residual: float = 0.0
    correction: float = 0.0
    box_margin_low: float = math.inf
    box_margin_high: float = math.inf
    operator_residual: float = 0.0


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    """Positions X (N, d) and labels L (N, M) of N agents at time t."""

    system: EntropicSystem
    X: np.ndarray
    L: np.ndarray
    t: float = 0.0
    diag: StepDiagnostics = field(default_factory=StepDiagnostics)

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        L = np.atleast_2d(np.asarray(self.L, dtype=float))
        if X.shape[0] != L.shape[0]:
            raise DimensionMismatch("positions and labels disagree on N")
        if L.shape[1] != self.system.space.M:
            raise DimensionMismatch("labels do not match the grid")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "L", L)

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def measure(self) -> EmpiricalMeasure:
        return EmpiricalMeasure(self.X, self.L, self.system.space)

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.X, axis=1) + lp_norms(self.system.space, self.L)

    def check_box(self) -> None:
        r, R = self.system.box.r_eps, self.system.box.R_eps
        if self.L.min() < r or self.L.max() > R:
            raise BoxViolation(f"labels in [{self.L.min()}, {self.L.max()}] leave [{r}, {R}]")


@dataclass(frozen=True)
class TheoremConstants:
    M_eps: float
    M_v: float
    C_T: float
    theta_eps: float
    T: float

    @classmethod
    def from_system(cls, system: EntropicSystem, T: float) -> "TheoremConstants":
        return cls(system.M_eps, system.velocity.M_v, system.C_T, system.theta, float(T))

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("M_eps", "M_v", "C_T", "theta_eps", "T")}


def gronwall_bound(initial: ParticleEnsemble, constants: TheoremConstants) -> float:
    """(max_i ||y_i(0)|| + M T) exp(2 M T); inf when the exponential overflows."""
    MT = constants.M_eps * constants.T
    if 2.0 * MT > 700.0:
        return math.inf
    return float((initial.norms().max() + MT) * math.exp(2.0 * MT))


def _commit(ens: ParticleEnsemble, X, L, dt, resid, stage_error=False) -> ParticleEnsemble:
    sysm = ens.system
    r, R = sysm.box.r_eps, sysm.box.R_eps
    w = sysm.space.weights
    mass_res = float(np.abs(L @ w - 1.0).max())
    try:
        L, corr = renormalize_rows(w, L, r, R)
    except BoxViolation as exc:
        if stage_error:
            raise StageLeftBox(str(exc)) from exc
        raise
    diag = StepDiagnostics(mass_res, corr, float(L.min() - r), float(R - L.max()), resid)
    return ParticleEnsemble(sysm, X, L, ens.t + dt, diag)


def _check_dt(ens, dt, factor):
    if dt <= 0:
        raise StepTooLarge("dt must be positive")
    cap = ens.system.theta / (factor * ens.system.lam)
    if dt > cap * (1 + _STEP_SLACK):
        raise StepTooLarge(f"dt={dt:.3e} exceeds the invariant-preserving bound {cap:.3e}")


def euler_step(ens: ParticleEnsemble, dt: float) -> ParticleEnsemble:
    """Explicit Euler with the field frozen at the pre-step ensemble."""
    _check_dt(ens, dt, 1.0)
    dX, dL, resid = ens.system.field(ens.X, ens.L)
    return _commit(ens, ens.X + dt * dX, ens.L + dt * dL, dt, resid)


def rk4_step(ens: ParticleEnsemble, dt: float) -> ParticleEnsemble:
    """Classical Runge-Kutta step; every stage state is box-checked and renormalized."""
    _check_dt(ens, dt, 4.0)
    sysm = ens.system
    r, R = sysm.box.r_eps, sysm.box.R_eps
    w = sysm.space.weights
    X0, L0 = ens.X, ens.L

    def stage(X, L):
        try:
            L, _ = renormalize_rows(w, L, r, R)
        except BoxViolation as exc:
            raise StageLeftBox(str(exc)) from exc
        return X, L

    k1x, k1l, res = sysm.field(X0, L0)
    k2x, k2l, _ = sysm.field(*stage(X0 + 0.5 * dt * k1x, L0 + 0.5 * dt * k1l))
    k3x, k3l, _ = sysm.field(*stage(X0 + 0.5 * dt * k2x, L0 + 0.5 * dt * k2l))
    k4x, k4l, _ = sysm.field(*stage(X0 + dt * k3x, L0 + dt * k3l))
    X = X0 + (dt / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
    L = L0 + (dt / 6.0) * (k1l + 2.0 * k2l + 2.0 * k3l + k4l)
    return _commit(ens, X, L, dt, res, stage_error=True)


STEPPERS = {"euler": (euler_step, 1.0), "rk4": (rk4_step, 4.0)}


def default_dt(system: EntropicSystem, T: float, method: str = "rk4") -> float:
    """min(theta / (factor lambda), T / 1000), factor 1 for Euler and 4 for RK4."""
    cap = system.theta / (STEPPERS[method][1] * system.lam)
    return min(cap, T / 1000.0) if T > 0 else cap


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Snapshots at sample times plus per-step diagnostics."""

    times: np.ndarray
    X: np.ndarray  # (S, N, d)
    L: np.ndarray  # (S, N, M)
    step_times: np.ndarray
    mass_residual: np.ndarray
    correction: np.ndarray
    box_margin_low: np.ndarray
    box_margin_high: np.ndarray
    operator_residual: np.ndarray
    system: EntropicSystem
    constants: TheoremConstants
    bound: float
    dt: float
    method: str

    @property
    def final(self) -> ParticleEnsemble:
        return ParticleEnsemble(self.system, self.X[-1], self.L[-1], float(self.times[-1]))

    def sup_norm(self) -> float:
        sp = self.system.space
        S, N, M = self.L.shape
        ln = lp_norms(sp, self.L.reshape(S * N, M)).reshape(S, N)
        return float((np.linalg.norm(self.X, axis=2) + ln).max())

    def audit(self) -> dict:
        """Re-check every invariant on every snapshot."""
        sp = self.system.space
        box = self.system.box
        r, R = box.r_eps, box.R_eps
        k = entropy_bounds(r, R).k
        flat = self.L.reshape(-1, sp.M)
        mass = float(np.abs(flat @ sp.weights - 1.0).max())
        ent = (flat * np.log(flat)) @ sp.weights
        drift = float(self.mass_residual.max()) if self.mass_residual.size else 0.0
        sup = self.sup_norm()
        checks = {
            "mass": {"value": mass, "bound": 1e-12, "passed": mass <= 1e-12},
            "mass_drift_pre_renormalization": {"value": drift, "bound": TOL_MASS_DRIFT,
                                               "passed": drift <= TOL_MASS_DRIFT},
            "box_low": {"value": float(flat.min()), "bound": r, "passed": bool(flat.min() >= r)},
            "box_high": {"value": float(flat.max()), "bound": R, "passed": bool(flat.max() <= R)},
            "entropy_low": {"value": float(ent.min()), "bound": 0.0, "passed": bool(ent.min() >= -1e-12)},
            "entropy_high": {"value": float(ent.max()), "bound": k, "passed": bool(ent.max() <= k + 1e-10)},
            "a_priori_bound": {"value": sup, "bound": self.bound, "passed": bool(sup <= self.bound)},
            "finite": {"value": 0.0, "bound": 0.0,
                       "passed": bool(np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.L)))},
        }
        return {"passed": all(c["passed"] for c in checks.values()), "checks": checks}

    def summary(self) -> dict:
        box = self.system.box
        return {
            "method": self.method,
            "dt": self.dt,
            "steps": int(self.step_times.size),
            "N": int(self.X.shape[1]),
            "d": int(self.X.shape[2]),
            "M": int(self.L.shape[2]),
            "T": float(self.times[-1]),
            "box": {"r_eps": box.r_eps, "R_eps": box.R_eps, "theta_eps": self.system.theta},
            "constants": self.constants.to_dict(),
            "gronwall_bound": self.bound if math.isfinite(self.bound) else "inf",
            "sup_norm": self.sup_norm(),
            "diagnostics": {
                "max_mass_residual": float(self.mass_residual.max(initial=0.0)),
                "max_correction": float(self.correction.max(initial=0.0)),
                "min_box_margin_low": float(self.box_margin_low.min(initial=math.inf)),
                "min_box_margin_high": float(self.box_margin_high.min(initial=math.inf)),
                "max_operator_residual": float(self.operator_residual.max(initial=0.0)),
            },
            "audit": self.audit(),
        }

    def to_csv(self, path_or_buf, header: list[str] | None = None) -> None:
        """Long format: one row per (sample time, agent)."""
        S, N, d = self.X.shape
        M = self.L.shape[2]
        own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
        fh = open(path_or_buf, "w", newline="") if own else path_or_buf
        try:
            for line in header or []:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "agent_id"] + [f"x{a}" for a in range(d)] + [f"l{k}" for k in range(M)])
            for s in range(S):
                t = repr(float(self.times[s]))
                for i in range(N):
                    w.writerow([t, i] + [repr(float(v)) for v in self.X[s, i]]
                               + [repr(float(v)) for v in self.L[s, i]])
        finally:
            if own:
                fh.close()


def integrate(ens0: ParticleEnsemble, T: float, dt: float | None = None, method: str = "rk4",
              sample_times=None, n_samples: int = 101, check_bound: bool = True) -> Trajectory:
    """Integrate to time T, landing exactly on every sample time.

    Each interval between samples is split into equal steps no larger than dt.
    """
    if method not in STEPPERS:
        raise ValueError(f"unknown method {method!r}")
    step, _ = STEPPERS[method]
    sysm = ens0.system
    ens0.check_box()
    if dt is None:
        dt = default_dt(sysm, T, method)
    if sample_times is None:
        sample_times = np.linspace(ens0.t, ens0.t + T, n_samples) if T > 0 else np.array([ens0.t])
    sample_times = np.asarray(sample_times, dtype=float)
    if np.any(np.diff(sample_times) <= 0) or sample_times[0] != ens0.t:
        raise ValueError("sample times must start at the initial time and increase strictly")
    consts = TheoremConstants.from_system(sysm, T)
    bound = gronwall_bound(ens0, consts)
    Xs, Ls = [ens0.X.copy()], [ens0.L.copy()]
    st, mr, co, lo, hi, orr = [], [], [], [], [], []
    ens = ens0
    for t_next in sample_times[1:]:
        span = t_next - ens.t
        n = max(1, int(math.ceil(span / dt - 1e-9)))
        h = span / n
        for j in range(n):
            ens = step(ens, h)
            st.append(ens.t)
            g = ens.diag
            mr.append(g.mass_residual)
            co.append(g.correction)
            lo.append(g.box_margin_low)
            hi.append(g.box_margin_high)
            orr.append(g.operator_residual)
        ens = replace(ens, t=float(t_next))
        if check_bound and ens.norms().max() > bound:
            raise InvariantViolation(f"a-priori bound {bound:.4g} exceeded at t={t_next:.4g}")
        Xs.append(ens.X.copy())
        Ls.append(ens.L.copy())
    return Trajectory(sample_times, np.stack(Xs), np.stack(Ls), np.array(st), np.array(mr),
                      np.array(co), np.array(lo), np.array(hi), np.array(orr), sysm, consts,
                      bound, float(dt), method)


def summary_json(traj: Trajectory, extra: dict | None = None) -> str:
    out = dict(extra or {})
    out.update(traj.summary())
    return json.dumps(out, indent=2, sort_keys=True)
