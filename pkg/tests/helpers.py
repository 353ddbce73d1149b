"""Shared generators for the fast-reaction and acceptance tests."""
import numpy as np

from entropic_agents import dynamics as dyn
from entropic_agents.fast_reaction import GProblem
from entropic_agents.measures import EmpiricalMeasure
from entropic_agents.space import StrategySpace, sample_densities, select_box_bounds

KINDS = ("linear", "penalized", "integral_tanh")


def random_kernel(rng, M, kind):
    if rng.random() < 0.5:
        payoff = dyn.AlignmentPayoff(rng.uniform(0.05, 0.2), rng.uniform(0.5, 2.0))
    else:
        payoff = dyn.ProfilePayoff(rng.uniform(-0.2, 0.2, size=M), rng.uniform(0.5, 2.0))
    if kind == "linear":
        return dyn.LinearKernel(payoff)
    c = rng.uniform(0.0, 0.1)
    if kind == "penalized":
        return dyn.PenalizedKernel(payoff, c)
    return dyn.IntegralKernel.tanh(payoff, c, rng.uniform(0.5, 2.0))


def random_problem(rng, M=None, kind=None, d=2):
    M = int(rng.integers(3, 17)) if M is None else M
    kind = KINDS[int(rng.integers(len(KINDS)))] if kind is None else kind
    if rng.random() < 0.5:
        sp = StrategySpace.uniform_grid(M)
    else:
        sp = StrategySpace.discrete(M, weights=rng.dirichlet(np.full(M, 3.0)))
    kern = random_kernel(rng, M, kind)
    eps = rng.uniform(0.6, 1.5)  # keeps C_T / eps <= 1
    box = select_box_bounds(eps, 2.0 * kern.C_F)
    nu = EmpiricalMeasure(rng.normal(size=(int(rng.integers(1, 9)), d)))
    return GProblem(sp, kern, nu, rng.normal(size=d), eps, box)


def feasible_samples(rng, problem, n, center=None):
    """Random points of C_eps: broad draws plus small perturbations of ``center``."""
    sp, b = problem.space, problem.box
    out = [sample_densities(sp, n // 2, b.r_eps, b.R_eps, rng, conc)
           for conc in (0.2, 5.0)]
    L = np.vstack(out)
    if center is not None:
        k = n - L.shape[0]
        t = rng.uniform(1e-4, 0.2, size=(k, 1))
        L = np.vstack([L, (1 - t) * center + t * sample_densities(sp, k, b.r_eps, b.R_eps, rng)])
    return L


# one "ACCEPTANCE n: PASS|FAIL ..." line per criterion, echoed in the terminal summary
ACCEPTANCE: list[str] = []


def report(n: int, title: str, passed: bool, detail: str) -> bool:
    line = f"ACCEPTANCE {n}: {'PASS' if passed else 'FAIL'}  {title} | {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return passed
