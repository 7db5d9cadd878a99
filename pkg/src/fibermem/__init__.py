"""Stiffness-optimal fiber reinforcement of membrane structures.

Surface membrane finite elements on quad meshes, a two-family orthotropic
fiber mixture, optimality-criteria sizing of the fiber thickness fields and
principal-stress alignment of the fiber directions.
"""

from .errors import (ConfigError, DegenerateElementError, FibermemError,
                     InvalidLoadError, MembraneIncompatibilityError,
                     MonotonicityError, SingularSystemError)
from .fem import (LoadCase, MembraneState, PointForces, assemble_and_solve,
                  element_sensitivities, element_stiffness, pointwise_sensitivity,
                  recover_membrane_forces)
from .geometry import (SurfaceMesh, TangentFrame, make_spheroid_mesh,
                       make_strip_mesh, tangent_frame_at)
from .material import (BaseMaterial3D, MembraneMaterial, OrthotropicConstants,
                       membrane_tangent, orthotropic_constants, plane_stress_moduli,
                       reduce_transverse_isotropic, strain_energy_density)
from .optimizer import (DesignField, DesignPoint, OptimizationSettings, RunHistory,
                        find_lambda, initial_design, kkt_certificate, oc_update,
                        optimize, rotate_fibers)

__version__ = "0.1.0"

__all__ = [
    "BaseMaterial3D", "ConfigError", "DegenerateElementError", "DesignField",
    "DesignPoint", "FibermemError", "InvalidLoadError", "LoadCase",
    "MembraneIncompatibilityError", "MembraneMaterial", "MembraneState",
    "MonotonicityError", "OptimizationSettings", "OrthotropicConstants",
    "PointForces", "RunHistory", "SingularSystemError", "SurfaceMesh",
    "TangentFrame", "assemble_and_solve", "element_sensitivities",
    "element_stiffness", "find_lambda", "initial_design", "kkt_certificate",
    "make_spheroid_mesh", "make_strip_mesh", "membrane_tangent", "oc_update",
    "optimize", "orthotropic_constants", "plane_stress_moduli",
    "pointwise_sensitivity", "recover_membrane_forces",
    "reduce_transverse_isotropic", "rotate_fibers", "strain_energy_density",
    "tangent_frame_at",
]
