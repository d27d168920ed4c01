"""Discontinuous Galerkin solver for a nonlinear wave / drug-transport system.

Symmetric interior penalty discretization with upwind convection on
triangulated rectangles; Newmark and backward Euler time stepping with
sequential coupling through a pressure-dependent diffusivity.
"""

__version__ = "0.1.0"

from .errors import ConfigurationError, InternalError, ModelError, SolverError
from .mesh import BoundaryTag, Face, Mesh, build_rect_mesh, classify_boundary
from .space import DgSpace, FieldVector, QuadRule, interpolate, l2_project, quad_rule

__all__ = [
    "BoundaryTag", "ConfigurationError", "DgSpace", "Face", "FieldVector",
    "InternalError", "Mesh", "ModelError", "QuadRule", "SolverError",
    "build_rect_mesh", "classify_boundary", "interpolate", "l2_project",
    "quad_rule",
]
