"""Fourier-based ergodic trajectory optimization and linear information-decay simulation."""

from .ergodicity import (
    PartialTrajectoryContext,
    combined_coefficients,
    ergodic_metric,
    oversampled_states,
    residual_coefficients,
    residual_field,
)
from .infosim import EidSpec, GaussianComponent, InfoGrid, build_eid, discretize, simulate_collection
from .planner import OptimizerConfig, OptimizeReport, composite_plan, greedy_plan, optimize
from .spectral import (
    CoefficientSet,
    DensityField,
    Domain,
    basis_eval,
    basis_grad,
    decompose_field,
    decompose_trajectory,
    reconstruct_field,
)
from .trajectory import Trajectory, effort, rollout

__version__ = "0.1.0"
