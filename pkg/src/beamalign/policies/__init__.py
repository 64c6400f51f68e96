"""Sensing/design strategies: the learned active policy and all baselines."""

from .active import ActiveNetConfig, ActiveSensingPolicy, active_policy_finalize, active_policy_step
from .bcd import BcdResult, bcd_perfect_csi, phase_match, random_ris_baseline
from .bisection import BisectionPolicy, HierarchicalCodebook, bisection_policy_step, select_strongest
from .csi import PerfectCsiPolicy, RandomRisCsiPolicy
from .fixed import FixedNetConfig, FixedSensingPolicy, RandomSensingPolicy
from .omp import OmpEstimate, angular_grid, measurements_from_trace, omp_baseline_gains, omp_estimate
from .power_iter import PowerIterationResult, power_iteration_policy

__all__ = [
    "ActiveNetConfig",
    "ActiveSensingPolicy",
    "active_policy_step",
    "active_policy_finalize",
    "FixedNetConfig",
    "FixedSensingPolicy",
    "RandomSensingPolicy",
    "PerfectCsiPolicy",
    "RandomRisCsiPolicy",
    "BisectionPolicy",
    "HierarchicalCodebook",
    "bisection_policy_step",
    "select_strongest",
    "BcdResult",
    "bcd_perfect_csi",
    "phase_match",
    "random_ris_baseline",
    "PowerIterationResult",
    "power_iteration_policy",
    "OmpEstimate",
    "omp_estimate",
    "angular_grid",
    "measurements_from_trace",
    "omp_baseline_gains",
]
