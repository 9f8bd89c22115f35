"""Event-driven Monte Carlo for Kac's 1D particle system.

Simulates the N-particle collision dynamics and its coupled nonlinear
(mean-field) processes, computes exact one-dimensional Wasserstein
distances, and provides an experiment harness for measuring chaos rates,
covariance decay, decoupling bounds and equilibrium contraction.
"""

from kac_chaos.events import CollisionEvent, EventStream, RngStream, angle_for_particle, sample_event
from kac_chaos.kac import (
    SystemState,
    advance,
    collide_polar,
    collide_rotation,
    load_velocities,
    sample_kac_sphere,
    save_velocities,
)
from kac_chaos.transport import (
    EmpiricalMeasure,
    QuantileFn,
    optimal_map_squared_cost,
    squared_pushforward,
    wasserstein_p,
    wasserstein_quantile,
)
from kac_chaos.flows import (
    EmpiricalReferenceFlow,
    FlowModel,
    ReferenceFlowConfig,
    StationaryGaussianFlow,
    build_reference_flow,
    default_snapshot_times,
    load_reference_flow,
    save_flow,
    stationary_gaussian,
)
from kac_chaos.coupling import (
    CoupledState,
    CouplingDiagnostics,
    DecoupledRun,
    DecoupledState,
    GapEstimate,
    compensation_rate,
    estimate_cov_u2,
    estimate_decoupling_gap,
    run_coupled,
    run_decoupled,
    step_coupled,
    step_decoupled,
)
from kac_chaos.experiments import (
    ConfigError,
    ExperimentConfig,
    ExperimentResult,
    F0Spec,
    RateFit,
    fit_loglog_slope,
    result_csv,
    result_json,
    run_experiment,
    theoretical_rates,
)

__all__ = [
    "CollisionEvent",
    "ConfigError",
    "CoupledState",
    "CouplingDiagnostics",
    "DecoupledRun",
    "DecoupledState",
    "EmpiricalMeasure",
    "EmpiricalReferenceFlow",
    "EventStream",
    "ExperimentConfig",
    "ExperimentResult",
    "F0Spec",
    "FlowModel",
    "GapEstimate",
    "QuantileFn",
    "RateFit",
    "ReferenceFlowConfig",
    "RngStream",
    "StationaryGaussianFlow",
    "SystemState",
    "advance",
    "angle_for_particle",
    "build_reference_flow",
    "collide_polar",
    "collide_rotation",
    "compensation_rate",
    "default_snapshot_times",
    "estimate_cov_u2",
    "estimate_decoupling_gap",
    "fit_loglog_slope",
    "load_reference_flow",
    "load_velocities",
    "optimal_map_squared_cost",
    "result_csv",
    "result_json",
    "run_coupled",
    "run_decoupled",
    "run_experiment",
    "sample_event",
    "sample_kac_sphere",
    "save_flow",
    "save_velocities",
    "squared_pushforward",
    "stationary_gaussian",
    "step_coupled",
    "step_decoupled",
    "theoretical_rates",
    "wasserstein_p",
    "wasserstein_quantile",
]
