"""Inverse curvature flows of star-shaped hypersurfaces in hyperbolic space."""

from .curvature import CurvatureFunction, CurvatureKind, check_concavity_sample, make_function
from .errors import (
    AdmissibilityError,
    ConfigurationError,
    DomainError,
    FitError,
    HypflowError,
    NumericsError,
    StencilError,
)
from .flow import FlowState, StepControl, init, init_from_u, run, sphere_exact, step
from .geometry import Model, compute_geometry, convert_radius, phi_from_u, u_from_phi
from .sphere import AxisymGrid, LatLongGrid, build_grid

__version__ = "0.1.0"

__all__ = [
    "AdmissibilityError",
    "AxisymGrid",
    "ConfigurationError",
    "CurvatureFunction",
    "CurvatureKind",
    "DomainError",
    "FitError",
    "FlowState",
    "HypflowError",
    "LatLongGrid",
    "Model",
    "NumericsError",
    "StencilError",
    "StepControl",
    "build_grid",
    "check_concavity_sample",
    "compute_geometry",
    "convert_radius",
    "init",
    "init_from_u",
    "make_function",
    "phi_from_u",
    "run",
    "sphere_exact",
    "step",
    "u_from_phi",
]
