import io
import math

import numpy as np
import pytest

from entropic_agents import dynamics as dyn
from entropic_agents.errors import BoxViolation, DimensionMismatch, InvariantViolation, StepTooLarge
from entropic_agents.particles import (
    ParticleEnsemble,
    TheoremConstants,
    default_dt,
    euler_step,
    gronwall_bound,
    integrate,
    rk4_step,
)
from entropic_agents.space import StrategySpace, sample_densities


def _system(M=8, eps=1.0, scale=0.1, vel=None, lam=1.0):
    sp = StrategySpace.uniform_grid(M)
    vel = vel or (dyn.SteeringVelocity(0.5) + dyn.AttractionVelocity(0.2))
    return dyn.EntropicSystem(sp, vel, dyn.ReplicatorOperator(dyn.ReplicatorKernel.cosine(sp, scale)), eps, lam)


def _ensemble(rng, sysm, N=12, d=2):
    X = rng.normal(size=(N, d))
    L = sample_densities(sysm.space, N, sysm.box.r_eps, sysm.box.R_eps, rng, 2.0)
    return ParticleEnsemble(sysm, X, L)


def test_constant_velocity_is_exact(rng):
    sp = StrategySpace.uniform_grid(4)
    sysm = dyn.EntropicSystem(sp, dyn.ConstantVelocity([1.0, -2.0]), dyn.ZeroOperator(), 1.0)
    ens = ParticleEnsemble(sysm, rng.normal(size=(5, 2)), np.ones((5, 4)))
    traj = integrate(ens, 1.0, method="euler", n_samples=3)
    assert np.allclose(traj.X[-1], ens.X + [1.0, -2.0], atol=1e-13)
    # uniform labels are stationary for the pure entropy drift
    assert np.array_equal(traj.L[-1], np.ones((5, 4)))


def test_attraction_contracts_to_center(rng):
    # x_i - xbar decays like exp(-gain t), xbar is conserved
    sp = StrategySpace.uniform_grid(4)
    sysm = dyn.EntropicSystem(sp, dyn.AttractionVelocity(0.8), dyn.ZeroOperator(), 1.0)
    ens = ParticleEnsemble(sysm, rng.normal(size=(6, 2)), np.ones((6, 4)))
    traj = integrate(ens, 1.0, dt=0.01, method="rk4", n_samples=2)
    xbar = ens.X.mean(0)
    expected = xbar + (ens.X - xbar) * math.exp(-0.8)
    assert np.allclose(traj.X[-1], expected, atol=1e-10)


def _final(ens, T, dt, method):
    return integrate(ens, T, dt=dt, method=method, n_samples=2).final


def test_convergence_orders(rng):
    sysm = _system(eps=1.0)
    ens = _ensemble(rng, sysm)
    T = 0.4
    ref = _final(ens, T, 0.0025, "rk4")

    def err(dt, method):
        f = _final(ens, T, dt, method)
        return np.abs(f.X - ref.X).max() + np.abs(f.L - ref.L).max()

    e_eu = [err(dt, "euler") for dt in (0.02, 0.01)]
    e_rk = [err(dt, "rk4") for dt in (0.02, 0.01)]
    assert 1.7 < e_eu[0] / e_eu[1] < 2.3
    assert 12 < e_rk[0] / e_rk[1] < 20


def test_permutation_equivariance(rng):
    sysm = _system()
    ens = _ensemble(rng, sysm, N=9)
    perm = rng.permutation(9)
    a = integrate(ens, 0.3, n_samples=4)
    b = integrate(ParticleEnsemble(sysm, ens.X[perm], ens.L[perm]), 0.3, n_samples=4)
    assert np.allclose(a.X[:, perm], b.X, atol=1e-12) and np.allclose(a.L[:, perm], b.L, atol=1e-12)


def test_audit_and_a_priori_bound(rng):
    sysm = _system(eps=0.5, scale=0.05)
    ens = _ensemble(rng, sysm, N=20)
    traj = integrate(ens, 1.0, n_samples=11)
    aud = traj.audit()
    assert aud["passed"], aud
    consts = TheoremConstants.from_system(sysm, 1.0)
    MT = consts.M_eps
    assert traj.bound == pytest.approx((ens.norms().max() + MT) * math.exp(2 * MT))
    assert traj.sup_norm() <= traj.bound
    assert traj.mass_residual.max() <= 1e-8


def test_gronwall_bound_overflow_is_inf(rng):
    sysm = _system()
    ens = _ensemble(rng, sysm)
    assert gronwall_bound(ens, TheoremConstants.from_system(sysm, 1e6)) == math.inf


def test_bound_violation_detected(rng):
    # a superlinear field outruns the bound computed from its declared constant
    sp = StrategySpace.uniform_grid(4)
    sysm = dyn.EntropicSystem(sp, dyn.SuperlinearVelocity(1.0), dyn.ZeroOperator(), 1.0)
    ens = ParticleEnsemble(sysm, np.array([[3.0, 0.0]]), np.ones((1, 4)))
    with pytest.raises(InvariantViolation):
        integrate(ens, 0.3, dt=1e-3, n_samples=31)


def test_step_too_large(rng):
    sysm = _system()
    ens = _ensemble(rng, sysm)
    with pytest.raises(StepTooLarge):
        euler_step(ens, 1.01 * sysm.theta)
    with pytest.raises(StepTooLarge):
        rk4_step(ens, 0.26 * sysm.theta)
    with pytest.raises(StepTooLarge):
        euler_step(ens, 0.0)
    euler_step(ens, sysm.theta)  # the bound itself is admissible


def test_step_bound_scales_with_lambda(rng):
    sysm = _system(lam=10.0)
    ens = _ensemble(rng, sysm)
    assert default_dt(sysm, 1.0, "rk4") <= sysm.theta / 40.0
    with pytest.raises(StepTooLarge):
        euler_step(ens, sysm.theta / 5.0)


def test_euler_at_theta_keeps_box(rng):
    sysm = _system(eps=0.5, scale=0.1)
    ens = _ensemble(rng, sysm, N=40)
    r, R = sysm.box.r_eps, sysm.box.R_eps
    for _ in range(50):
        ens = euler_step(ens, sysm.theta)
        assert ens.L.min() >= r and ens.L.max() <= R


def test_ensemble_validation(rng):
    sysm = _system()
    with pytest.raises(DimensionMismatch):
        ParticleEnsemble(sysm, np.zeros((3, 2)), np.ones((2, 8)))
    with pytest.raises(DimensionMismatch):
        ParticleEnsemble(sysm, np.zeros((3, 2)), np.ones((3, 5)))
    bad = ParticleEnsemble(sysm, np.zeros((1, 2)), np.full((1, 8), 1.0))
    bad.L[0, 0] = sysm.box.R_eps * 2
    with pytest.raises(BoxViolation):
        integrate(bad, 0.1)


def test_sample_times_hit_exactly(rng):
    sysm = _system()
    ens = _ensemble(rng, sysm)
    times = np.array([0.0, 0.013, 0.2, 0.5])
    traj = integrate(ens, 0.5, sample_times=times)
    assert np.array_equal(traj.times, times)
    with pytest.raises(ValueError):
        integrate(ens, 0.5, sample_times=[0.0, 0.3, 0.2])


def test_csv_format(rng):
    sysm = _system(M=3)
    ens = _ensemble(rng, sysm, N=2)
    traj = integrate(ens, 0.1, n_samples=2)
    buf = io.StringIO()
    traj.to_csv(buf, ["seed=1"])
    lines = buf.getvalue().splitlines()
    assert lines[0] == "# seed=1"
    assert lines[1] == "t,agent_id,x0,x1,l0,l1,l2"
    assert len(lines) == 2 + 2 * 2
    row = lines[-1].split(",")
    assert float(row[0]) == 0.1 and row[1] == "1" and float(row[2]) == traj.X[-1, 1, 0]
    assert traj.summary()["steps"] == traj.step_times.size
