"""Invariant-manifold model reduction and forced-response extraction.

Reduces a periodically forced nonlinear mechanical system to a
two-dimensional manifold tangent to a chosen vibration mode, then reads
forced-response curves (with stability and isolas) off the reduced
two-dimensional vector field instead of time-integrating the full model.
"""

__version__ = "0.1.0"

from .mpoly import MultiIndexPolynomial
from .spectral import (
    MechanicalSystem,
    PolynomialForce,
    SpectralDecomposition,
    to_first_order,
    decompose,
    check_nonresonance,
)
from .ssm_auto import AutonomousSSM, build_autonomous, autonomous_invariance_residual
from .ssm_nonauto import NonAutonomousSSM, build_nonautonomous, full_invariance_residual
from .reduced import (
    PolarReducedModel,
    FrcPoint,
    evaluate_polar_rhs,
    solve_fixed_points,
    classify_stability,
    sweep_frc,
    ellipse_diagnostics,
)
from .beam import BeamConfig, build_beam, analytic_ssm_coefficients
from .backmap import backmap_orbit, steady_state_oracle

__all__ = [
    "MultiIndexPolynomial",
    "MechanicalSystem",
    "PolynomialForce",
    "SpectralDecomposition",
    "to_first_order",
    "decompose",
    "check_nonresonance",
    "AutonomousSSM",
    "build_autonomous",
    "autonomous_invariance_residual",
    "NonAutonomousSSM",
    "build_nonautonomous",
    "full_invariance_residual",
    "PolarReducedModel",
    "FrcPoint",
    "evaluate_polar_rhs",
    "solve_fixed_points",
    "classify_stability",
    "sweep_frc",
    "ellipse_diagnostics",
    "BeamConfig",
    "build_beam",
    "analytic_ssm_coefficients",
    "backmap_orbit",
    "steady_state_oracle",
]
