"""clab: analytics and simulation for a fleet of queues sharing a central server.

A system of N stations receives Poisson arrivals at rate ``lam`` per station.
A fraction ``p`` of the total service capacity is pooled into one central
server that always serves a longest queue; the rest stays at the stations.
This package provides the deterministic fluid approximation of that system,
the closed form of its unique fixed point, a finite-N event simulator, and a
harness that verifies the convergence and phase-transition behaviour joining
the two: any ``p > 0`` turns the heavy-traffic mean queue length from
``lam / (1 - lam)`` growth into logarithmic growth.
"""

__version__ = "0.1.0"

from .errors import (
    ClabError,
    InfiniteSupportError,
    InvalidInputError,
    InvalidStateError,
    NonConvergenceError,
    NumericalBlowUpError,
    TruncationError,
    UnsupportedCaseError,
)
from .fluid import (
    DriftVector,
    IntegratorConfig,
    drift_s,
    drift_v,
    integrate,
    osl_gap,
    settle_to_invariant,
    support_index,
)
from .harness import (
    ResultRecord,
    SweepSpec,
    concentration_study,
    finite_horizon_deviation,
    sweep,
)
from .invariant import (
    InvariantProfile,
    closed_form_mean_queue_length,
    critical_index,
    invariant_profile,
    mean_queue_length,
    scaling_target,
)
from .simulator import (
    DecompositionLedger,
    SimConfig,
    SteadyStateEstimate,
    compare_policies,
    run_chain,
    steady_state_estimate,
    step,
    subseed,
)
from .state import (
    AggregateProfile,
    Params,
    QueueVector,
    TailProfile,
    Trajectory,
    aggregate_from_tail,
    normalized_from_queues,
    path_distance,
    tail_from_aggregate,
    weighted_distance,
)

__all__ = [
    "AggregateProfile", "ClabError", "DecompositionLedger", "DriftVector",
    "InfiniteSupportError", "IntegratorConfig", "InvalidInputError",
    "InvalidStateError", "InvariantProfile", "NonConvergenceError",
    "NumericalBlowUpError", "Params", "QueueVector", "ResultRecord",
    "SimConfig", "SteadyStateEstimate", "SweepSpec", "TailProfile",
    "Trajectory", "TruncationError", "UnsupportedCaseError",
    "aggregate_from_tail", "compare_policies", "concentration_study",
    "closed_form_mean_queue_length", "critical_index", "drift_s", "drift_v",
    "finite_horizon_deviation", "integrate", "invariant_profile",
    "mean_queue_length", "normalized_from_queues", "osl_gap", "path_distance",
    "run_chain", "scaling_target", "settle_to_invariant",
    "steady_state_estimate", "step", "subseed", "support_index", "sweep",
    "tail_from_aggregate", "weighted_distance",
]
