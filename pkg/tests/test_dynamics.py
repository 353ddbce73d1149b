import math

import numpy as np
import pytest

from entropic_agents import dynamics as dyn
from entropic_agents.errors import DimensionMismatch, InvalidBounds, NegativeRate
from entropic_agents.measures import AgentState, EmpiricalMeasure
from entropic_agents.space import (
    LabelDensity,
    StrategySpace,
    entropy_bounds,
    entropy_drift,
    lp_norms,
    sample_densities,
    select_box_bounds,
)


def _setup(rng, M=8, N=10, d=2, r=0.25, R=4.0, space=None):
    sp = space or StrategySpace.uniform_grid(M)
    X = rng.normal(size=(N, d))
    L = sample_densities(sp, N, r, R, rng, 0.8)
    return sp, X, L


# -- replicator -------------------------------------------------------------

def test_replicator_matches_direct_sum(rng):
    sp, X, L = _setup(rng)
    kern = dyn.ReplicatorKernel(rng.normal(size=(8, 8)), width=0.8)
    T, _ = dyn.ReplicatorOperator(kern)(sp, X[:3], L[:3], X, L)
    w = sp.weights
    for i in range(3):
        g = np.exp(-((X - X[i]) ** 2).sum(1) / (2 * 0.64))
        # J_Psi(x_i, u_k) = mean_j g_ij sum_l A_kl l_j(l) w_l
        Jp = np.array([np.mean(g * (L @ (w * kern.A[k]))) for k in range(8)])
        expected = L[i] * (Jp - w @ (Jp * L[i]))
        assert np.allclose(T[i], expected, atol=1e-14)


def test_operators_zero_mean_post_correction(rng):
    sp, X, L = _setup(rng, M=64, N=20)
    ops = [dyn.ReplicatorOperator(dyn.ReplicatorKernel.cosine(sp, 0.3)),
           dyn.UndisclosedOperator(dyn.LinearKernel(dyn.AlignmentPayoff(0.3))),
           dyn.UndisclosedOperator(dyn.PenalizedKernel(dyn.AlignmentPayoff(0.3), 0.2)),
           dyn.UndisclosedOperator(dyn.IntegralKernel.tanh(dyn.AlignmentPayoff(0.3), 0.2)),
           dyn.MarkovOperator(dyn.MarkovRates(rng.random((64, 64)), 0.5), sp)]
    for op in ops:
        T, resid = op(sp, X, L, X, L)
        assert np.abs(T @ sp.weights).max() <= 1e-12
        assert resid <= 1e-8


def test_undisclosed_equals_replicator_for_strategy_blind_payoff(rng):
    sp, X, L = _setup(rng, M=12, N=15)
    a = rng.normal(size=12)
    rep = dyn.ReplicatorOperator(dyn.ReplicatorKernel(np.repeat(a[:, None], 12, axis=1), width=0.9))
    und = dyn.UndisclosedOperator(dyn.LinearKernel(dyn.ProfilePayoff(a, width=0.9)))
    for _ in range(100):
        Xs, Ls = rng.normal(size=(7, 2)), sample_densities(sp, 7, 0.25, 4.0, rng)
        x, ell = rng.normal(size=(1, 2)), sample_densities(sp, 1, 0.25, 4.0, rng)
        T1, _ = rep(sp, x, ell, Xs, Ls)
        T2, _ = und(sp, x, ell, Xs, None)
        assert np.abs(T1 - T2).max() <= 1e-12


def test_undisclosed_pointwise_bound(rng):
    # |T_k| <= 2 C_F l_k
    sp, X, L = _setup(rng, M=10, N=30)
    for kern in (dyn.LinearKernel(dyn.AlignmentPayoff(0.7)), dyn.PenalizedKernel(dyn.AlignmentPayoff(0.7), 0.3),
                 dyn.IntegralKernel.tanh(dyn.AlignmentPayoff(0.7), 0.3)):
        T, _ = dyn.UndisclosedOperator(kern)(sp, X, L, X, None)
        assert np.all(np.abs(T) <= 2 * kern.C_F * L + 1e-12)


def test_alignment_payoff_bounded_by_scale(rng):
    sp = StrategySpace.uniform_grid(16)
    pay = dyn.AlignmentPayoff(0.4, width=0.5)
    for _ in range(20):
        P = pay.payoff(sp, rng.normal(size=(5, 2)), rng.normal(scale=0.5, size=(9, 2)))
        assert np.abs(P).max() <= 0.4 + 1e-12


def test_kernel_F_consistent_with_dF(rng):
    sp, X, _ = _setup(rng, M=6, N=5)
    Xi = rng.uniform(0.3, 3.0, size=(5, 6))
    h = 1e-6
    for kern in (dyn.LinearKernel(dyn.AlignmentPayoff(0.5)), dyn.PenalizedKernel(dyn.AlignmentPayoff(0.5), 0.4),
                 dyn.IntegralKernel.tanh(dyn.AlignmentPayoff(0.5), 0.4, width=1.0)):
        fd = (kern.F(sp, X, Xi + h, X) - kern.F(sp, X, Xi - h, X)) / (2 * h)
        assert np.allclose(fd, kern.dF(sp, X, Xi, X), atol=1e-7)
        assert np.allclose(kern.F(sp, X, np.zeros_like(Xi), X), 0.0)


def test_integral_tanh_closed_form(rng):
    # int_0^xi tanh = log cosh xi
    sp, X, _ = _setup(rng, M=5, N=4)
    pay = dyn.AlignmentPayoff(0.5)
    kern = dyn.IntegralKernel.tanh(pay, 0.3, width=1.0)
    Xi = rng.uniform(0.2, 4.0, size=(4, 5))
    g = np.exp(-((X[:, None] - X[None]) ** 2).sum(-1) / 2).mean(1)
    exact = -pay.payoff(sp, X, X) * Xi + 0.3 * g[:, None] * np.log(np.cosh(Xi))
    assert np.allclose(kern.F(sp, X, Xi, X), exact, atol=1e-12)


# -- Markov -----------------------------------------------------------------

def test_markov_two_state_hand_value():
    sp = StrategySpace.discrete(2)
    a, b = 0.7, 0.2  # rate 0 -> 1 and 1 -> 0
    op = dyn.MarkovOperator(dyn.MarkovRates([[0, a], [b, 0]]), sp)
    ell = np.array([[1.4, 0.6]])
    T, resid = op(sp, np.zeros((1, 1)), ell, np.zeros((1, 1)), ell)
    assert np.allclose(T[0], [-a * 1.4 + b * 0.6, a * 1.4 - b * 0.6], atol=1e-15)
    assert resid <= 1e-15


def test_markov_conserves_mass_nonuniform_weights(rng):
    w = rng.dirichlet(np.ones(5))
    sp = StrategySpace.discrete(5, weights=w)
    rates = dyn.MarkovRates(rng.random((5, 5)) * 2, imitation=0.8)
    X = rng.normal(size=(20, 2))
    L = sample_densities(sp, 20, 0.2, 5.0, rng)
    raw = dyn.MarkovOperator(rates, sp).raw(sp, X, L, X, L)
    assert np.abs(raw @ w).max() <= 1e-12


def test_markov_diagonal_is_outflow_for_uniform_weights(rng):
    sp = StrategySpace.discrete(4)
    A = rng.random((1, 4, 4))
    for h in range(4):
        A[0, h, h] = 0.0
    assert np.allclose(dyn.MarkovRates.diagonal(sp, A)[0], A[0].sum(axis=1))


def test_markov_rejects_negative_rates():
    with pytest.raises(NegativeRate):
        dyn.MarkovRates([[0, -1.0], [1.0, 0]])
    with pytest.raises(DimensionMismatch):
        dyn.MarkovRates(np.ones((2, 3)))


# -- velocities -------------------------------------------------------------

def test_velocities_respect_declared_growth(rng):
    sp, X, L = _setup(rng, N=40)
    X = 50 * X
    vel = dyn.SteeringVelocity(0.5) + dyn.AttractionVelocity(0.2) + dyn.ConstantVelocity([0.3, -0.1])
    V = vel(sp, X, L, X, L)
    m1 = np.mean(np.linalg.norm(X, axis=1) + lp_norms(sp, L))
    ynorm = np.linalg.norm(X, axis=1) + lp_norms(sp, L)
    assert np.all(np.linalg.norm(V, axis=1) <= vel.M_v * (1 + ynorm + m1))


def test_constant_velocity_dimension_checked():
    sp = StrategySpace.uniform_grid(2)
    with pytest.raises(DimensionMismatch):
        dyn.ConstantVelocity([1.0, 2.0, 3.0])(sp, np.zeros((1, 2)), np.ones((1, 2)), np.zeros((1, 2)), None)


# -- entropic field ---------------------------------------------------------

def _one_state(sp, rng):
    ell = sample_densities(sp, 1, 0.25, 4.0, rng)[0]
    return AgentState(rng.normal(size=2), LabelDensity(ell, 0.25, 4.0))


def test_entropic_field_no_entropy_no_operator(rng):
    sp = StrategySpace.uniform_grid(6)
    y = _one_state(sp, rng)
    Psi = EmpiricalMeasure(rng.normal(size=(5, 2)), sample_densities(sp, 5, 0.25, 4.0, rng), sp)
    v = dyn.AttractionVelocity(0.7)
    dx, dl = dyn.entropic_field(sp, v, dyn.ZeroOperator(), Psi, y, eps=0.0, lam=1.0)
    assert np.allclose(dx, 0.7 * (Psi.X.mean(0) - y.x)) and np.all(dl == 0)


def test_entropic_field_lambda_homogeneous(rng):
    sp, X, L = _setup(rng, M=10, N=12)
    base = dyn.EntropicSystem(sp, dyn.SteeringVelocity(0.5), dyn.ReplicatorOperator(
        dyn.ReplicatorKernel.cosine(sp, 0.1)), eps=0.5)
    dX1, dL1, _ = base.field(X, L)
    for lam in (2.0, 7.5, 1e3):
        dX, dL, _ = base.with_lambda(lam).field(X, L)
        assert np.array_equal(dX, dX1) and np.array_equal(dL, lam * dL1)
    assert np.abs(dL1 @ sp.weights).max() <= 1e-12


def test_entropic_field_matches_components(rng):
    sp = StrategySpace.uniform_grid(6)
    y = _one_state(sp, rng)
    Psi = EmpiricalMeasure(rng.normal(size=(5, 2)), sample_densities(sp, 5, 0.25, 4.0, rng), sp)
    kern = dyn.ReplicatorKernel.cosine(sp, 0.2)
    _, dl = dyn.entropic_field(sp, dyn.ZeroVelocity(), dyn.ReplicatorOperator(kern), Psi, y, eps=0.3, lam=2.0)
    T = dyn.replicator_operator(sp, kern, Psi, y)
    assert np.allclose(dl, 2.0 * (T + 0.3 * entropy_drift(sp, y.ell)), atol=1e-14)


def test_field_sublinear_growth(rng):
    # ||(dx, dl)|| <= M_eps (1 + ||y|| + m_1(Psi)) at lambda = 1
    sp = StrategySpace.uniform_grid(16)
    sysm = dyn.EntropicSystem(sp, dyn.SteeringVelocity(0.5) + dyn.AttractionVelocity(0.2),
                              dyn.ReplicatorOperator(dyn.ReplicatorKernel.cosine(sp, 0.05)), eps=0.5)
    r, R = sysm.box.r_eps, sysm.box.R_eps
    for scale in (0.1, 1.0, 30.0):
        X = scale * rng.normal(size=(25, 2))
        L = sample_densities(sp, 25, r, R, rng, 0.3)
        dX, dL, _ = sysm.field(X, L)
        lhs = np.linalg.norm(dX, axis=1) + lp_norms(sp, dL)
        ynorm = np.linalg.norm(X, axis=1) + lp_norms(sp, L)
        assert np.all(lhs <= sysm.M_eps * (1 + ynorm + ynorm.mean()))


def test_system_refuses_eps_zero_and_p_inf():
    sp = StrategySpace.uniform_grid(4)
    with pytest.raises(InvalidBounds):
        dyn.EntropicSystem(sp, dyn.ZeroVelocity(), dyn.ZeroOperator(), eps=0.0)
    with pytest.raises(InvalidBounds):
        dyn.EntropicSystem(sp.with_p(math.inf), dyn.ZeroVelocity(), dyn.ZeroOperator(), eps=1.0)


# -- step bound -------------------------------------------------------------

def test_theta_positive_for_pure_entropy():
    for eps in (1e-3, 0.1, 1.0):
        box = select_box_bounds(eps, 0.0)
        th = dyn.step_bound_theta(eps, box, 0.0)
        assert 0 < th < math.inf


@pytest.mark.parametrize("eps,C_T", [(0.5, 0.1), (0.5, 0.2), (1.0, 0.5), (0.2, 0.0)])
def test_theta_certifies_worst_case_euler_step(rng, eps, C_T):
    sp = StrategySpace.uniform_grid(10)
    box = select_box_bounds(eps, C_T)
    r, R = box.r_eps, box.R_eps
    th = dyn.step_bound_theta(eps, box, C_T)
    Ls = sample_densities(sp, 1000, r, R, rng, concentration=0.2)
    # include densities pinned at the bounds
    Ls[:10] = sample_densities(sp, 10, r, R, rng, concentration=0.01)
    for L in Ls:
        H = entropy_drift(sp, L)
        up = L + th * (C_T * R + eps * H)        # (T3) upper bound T <= C_T omega(R)
        down = L + th * (-C_T * L + eps * H)      # (T3) negative part -T <= C_T omega(l)
        assert up.max() <= R * (1 + 1e-12) and down.min() >= r * (1 - 1e-12)
        assert up.min() >= r * (1 - 1e-12) and down.max() <= R * (1 + 1e-12)


def test_theta_depends_only_on_box():
    box = select_box_bounds(0.5, 0.2)
    assert dyn.step_bound_theta(0.5, box) == dyn.step_bound_theta(0.5, box, 0.2, "linear")


# -- assumption probes ------------------------------------------------------

def test_probe_bounded_replicator_passes(rng):
    sp = StrategySpace.uniform_grid(8)
    sysm = dyn.EntropicSystem(sp, dyn.SteeringVelocity(0.5) + dyn.AttractionVelocity(0.2),
                              dyn.ReplicatorOperator(dyn.ReplicatorKernel.cosine(sp, 0.1)), eps=0.5)
    assert sysm.C_T == pytest.approx(0.2)
    rep = dyn.probe_assumptions(sysm, 2, rng, n_probes=30)
    assert rep.passed, rep.failed()


def test_probe_undisclosed_passes(rng):
    sp = StrategySpace.uniform_grid(8)
    op = dyn.UndisclosedOperator(dyn.PenalizedKernel(dyn.AlignmentPayoff(0.1), 0.05))
    sysm = dyn.EntropicSystem(sp, dyn.SteeringVelocity(0.5), op, eps=1.0)
    rep = dyn.probe_assumptions(sysm, 2, rng, n_probes=30)
    assert rep.passed, rep.failed()
    assert {"F3 bounded derivative", "F convex in xi"} <= {c.name for c in rep.checks}


def test_probe_flags_superlinear_velocity(rng):
    sp = StrategySpace.uniform_grid(8)
    sysm = dyn.EntropicSystem(sp, dyn.SuperlinearVelocity(1.0), dyn.ZeroOperator(), eps=0.5)
    rep = dyn.probe_assumptions(sysm, 2, rng, n_probes=30)
    assert rep.failed() == ["v3 linear growth"]
    bad = next(c for c in rep.checks if c.name == "v3 linear growth")
    assert bad.witness is not None


def test_probe_flags_understated_operator_bound(rng):
    sp = StrategySpace.uniform_grid(8)
    op = dyn.ReplicatorOperator(dyn.ReplicatorKernel.cosine(sp, 1.0))
    op.C_T = 0.01  # lie about the bound
    sysm = dyn.EntropicSystem(sp, dyn.ZeroVelocity(), op, eps=0.5)
    rep = dyn.probe_assumptions(sysm, 2, rng, n_probes=30)
    assert "T3 upper bound" in rep.failed() or "T3 negative part" in rep.failed()
