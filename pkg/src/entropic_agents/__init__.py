"""Entropy-regularized multi-population agent dynamics.

Particle simulation of the position/label system, exact W1 distances between
empirical measures, the minimizer map of the entropic functional and the
fast-reaction limit, with empirical checks of the invariants and rates.
"""
from ._accel import backend
from .dynamics import (
    AlignmentPayoff,
    AttractionVelocity,
    ConstantVelocity,
    EntropicSystem,
    LinearKernel,
    MarkovOperator,
    MarkovRates,
    PenalizedKernel,
    ProfilePayoff,
    ReplicatorKernel,
    ReplicatorOperator,
    SteeringVelocity,
    UndisclosedOperator,
    ZeroOperator,
    ZeroVelocity,
    entropic_field,
    probe_assumptions,
    step_bound_theta,
)
from .fast_reaction import (
    GProblem,
    fast_reaction_study,
    g_value,
    gibbs_reference,
    integrate_limit,
    mean_field_study,
    minimize_g,
)
from .measures import AgentState, EmpiricalMeasure, first_moment, state_distance, w1
from .particles import ParticleEnsemble, Trajectory, euler_step, gronwall_bound, integrate, rk4_step
from .scenario import ScenarioConfig
from .space import (
    BoxBounds,
    LabelDensity,
    StrategySpace,
    entropy_bounds,
    entropy_drift,
    lp_norm,
    negative_entropy,
    renormalize,
    select_box_bounds,
)

__version__ = "0.1.0"
