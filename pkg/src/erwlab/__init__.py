"""Excited random walks in finite cookie environments."""

from .backward import (
    BackwardTrajectory,
    KernelRow,
    SpeedReport,
    StationaryDistribution,
    dz_distribution_check,
    exact_kernel_row,
    failures_before_kth_success,
    run_backward,
    speed,
    speed_report,
    stationary_distribution,
)
from .coupling import CouplingTable, Order, OrderVerdict, build_coupling_table, decide_order
from .env import CookieEnvironment, Regime, SpeedSign, Transience, classify, mirror, total_drift
from .fields import CoupledTrialField, TrialField, parse_seed
from .forward import (
    ForwardTrajectory,
    NonConvergenceError,
    StepLaw,
    escape_probability,
    exact_step_distribution,
    excursion_identity_oracle,
    run_forward,
    successes_before_kth_failure,
    survival_probability,
)
from .harness import (
    ExperimentReport,
    escape_probability_gap,
    run_suite,
    speed_gap,
    verify_coupled_domination,
    verify_pathwise_UV,
)
from .walk import WalkTrace, excursion_stats, hitting_stats, run_walk, speed_monte_carlo

__version__ = "0.1.0"
