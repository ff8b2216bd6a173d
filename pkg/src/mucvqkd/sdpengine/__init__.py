"""Dimension-reduced relative-entropy engine for lossy and noisy channels."""

from .frame import DisplacedFrame
from .objective import KeyMapObjective, objective_and_gradient
from .operators import (
    CutoffSpec,
    NetworkSpec,
    build_observables,
    build_projection,
    build_region_operators,
    build_rho_A,
    compute_weight,
    delta_correction,
)
from .solver import ConstraintSet, SolveReport, dual_lower_bound, frank_wolfe_solve, keyrate_numeric
