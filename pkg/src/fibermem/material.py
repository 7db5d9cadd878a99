"""Membrane constitutive law: base material, plane-stress reduction, fibers.

The stored parameters of record are the in-plane Young modulus E, Poisson
ratio nu, base thickness t_b and the fiber stiffness coefficient alpha.  The
surface elasticity operator maps in-plane strain to thickness-integrated
in-plane stress,

    S[eps] = t_b * (delta * P tr(eps) + 2 mu P eps P)
             + alpha * t1 * S1 (S1 : eps) + alpha * t2 * S2 (S2 : eps),

with S1 = s (x) s, S2 = s_perp (x) s_perp the two orthogonal fiber
projectors.  Its computational form is a symmetric 3x3 matrix acting on the
local Voigt strain (eps11, eps22, gamma12) with engineering shear.

A 3D transversely isotropic parent law (delta1, delta2, delta3, gamma, mu)
is kept only to document and test the reduction to this membrane law: the
membrane stress state forces gamma = 0 and eliminates delta1, delta2, delta3
in favor of delta = delta3 - delta2^2 / delta1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MembraneIncompatibilityError
from .geometry import TangentFrame

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class BaseMaterial3D:
    """Transversely isotropic 3D elastic constants (axis along the normal)."""

    delta1: float
    delta2: float
    delta3: float
    gamma: float
    mu: float

    def __post_init__(self):
        if self.delta1 <= 0:
            raise ValueError("delta1 must be positive")
        if self.mu <= 0:
            raise ValueError("mu must be positive")


@dataclass(frozen=True)
class MembraneMaterial:
    """In-plane moduli, base thickness and fiber stiffness coefficient."""

    E: float
    nu: float
    t_b: float
    alpha: float

    def __post_init__(self):
        if self.E <= 0:
            raise ValueError("E must be positive")
        if not 0.0 <= self.nu < 1.0:
            raise ValueError("nu must lie in [0, 1)")
        if self.t_b <= 0:
            raise ValueError("t_b must be positive")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")

    @property
    def delta(self) -> float:
        return plane_stress_moduli(self.E, self.nu)[0]

    @property
    def mu(self) -> float:
        return plane_stress_moduli(self.E, self.nu)[1]


@dataclass(frozen=True)
class OrthotropicConstants:
    """Per-thickness stiffness constants in the fiber basis.

    In the basis (s, s_perp) the per-thickness stress obeys
    sigma11 = A eps11 + B eps22, sigma22 = C eps22 + B eps11,
    sigma12 = 2 D eps12.  beta = A + C - 2B - 4D >= 0 is the low-shear
    constant that makes principal-stress alignment optimal.
    """

    A: float
    B: float
    C: float
    D: float
    beta: float

    def __post_init__(self):
        ident = self.A + self.C - 2 * self.B - 4 * self.D
        scale = abs(self.A) + abs(self.C) + abs(self.B) + abs(self.D) + _EPS
        if abs(self.beta - ident) > 1e-12 * scale:
            raise ValueError("beta must equal A + C - 2B - 4D")
        if self.beta < -1e-12 * scale:
            raise ValueError("beta must be non-negative (low-shear material)")


def plane_stress_moduli(E: float, nu: float) -> tuple[float, float]:
    """Plane-stress Lame-type moduli (delta, mu) from (E, nu)."""
    if E <= 0:
        raise ValueError("E must be positive")
    if not 0.0 <= nu < 1.0:
        raise ValueError("nu must lie in [0, 1)")
    return nu * E / (1.0 - nu * nu), E / (2.0 * (1.0 + nu))


def reduce_transverse_isotropic(base: BaseMaterial3D) -> tuple[float, float]:
    """Reduce the 3D transversely isotropic law to the membrane pair (delta, mu).

    The membrane stress state (zero normal and transverse-shear stress) is
    achievable only with zero out-of-plane shear coupling; the normal strain
    is then slaved to the in-plane trace and the in-plane response carries
    delta = delta3 - delta2^2 / delta1 and the unchanged shear modulus mu.
    """
    scale = abs(base.delta1) + abs(base.delta2) + abs(base.delta3) + abs(base.mu)
    if abs(base.gamma) > 1e-12 * scale:
        raise MembraneIncompatibilityError(
            f"transverse shear coupling gamma={base.gamma!r} prevents a zero "
            "out-of-plane shear stress; the membrane reduction requires gamma = 0"
        )
    return base.delta3 - base.delta2 ** 2 / base.delta1, base.mu


def base_stiffness_voigt(delta: float, mu: float) -> np.ndarray:
    """Plane-stress 3x3 Voigt matrix of the unreinforced material (per thickness)."""
    return np.array([
        [delta + 2 * mu, delta, 0.0],
        [delta, delta + 2 * mu, 0.0],
        [0.0, 0.0, mu],
    ])


def _fiber_voigt(c: float, s: float) -> np.ndarray:
    """Voigt vector of s (x) s for a unit in-plane direction (c, s)."""
    return np.array([c * c, s * s, c * s])


def fiber_local_components(s: np.ndarray, frame: TangentFrame) -> tuple[float, float]:
    """In-plane components of a fiber direction in a tangent frame, normalized."""
    s = np.asarray(s, dtype=float)
    if abs(s @ frame.n) > 1e-10 * np.linalg.norm(s):
        raise ValueError("fiber direction must be tangent to the surface (s . n = 0)")
    c, sn = s @ frame.e1, s @ frame.e2
    r = np.hypot(c, sn)
    if r < 1e-12:
        raise ValueError("fiber direction has no tangential component")
    return c / r, sn / r


def membrane_tangent(mat: MembraneMaterial, t1: float, t2: float,
                     s: np.ndarray, frame: TangentFrame) -> np.ndarray:
    """Surface elasticity operator as a 3x3 Voigt matrix in the local frame.

    Maps (eps11, eps22, gamma12) to the thickness-integrated stress
    (m11, m22, m12); symmetric, positive semi-definite, positive definite
    for t_b > 0.
    """
    if t1 < 0 or t2 < 0:
        raise ValueError("fiber thicknesses must be non-negative")
    delta, mu = plane_stress_moduli(mat.E, mat.nu)
    C = mat.t_b * base_stiffness_voigt(delta, mu)
    if mat.alpha > 0 and (t1 > 0 or t2 > 0):
        c, sn = fiber_local_components(s, frame)
        v1 = _fiber_voigt(c, sn)
        v2 = _fiber_voigt(-sn, c)
        C = C + mat.alpha * t1 * np.outer(v1, v1) + mat.alpha * t2 * np.outer(v2, v2)
    return C


def orthotropic_constants(mat: MembraneMaterial, t1: float, t2: float) -> OrthotropicConstants:
    """Per-thickness constants A, B, C, D and the low-shear constant beta."""
    t = mat.t_b + t1 + t2
    if t <= 0:
        raise ValueError("total thickness must be positive")
    delta, mu = plane_stress_moduli(mat.E, mat.nu)
    A = (mat.t_b / t) * (delta + 2 * mu) + (t1 / t) * mat.alpha
    B = (mat.t_b / t) * delta
    C = (mat.t_b / t) * (delta + 2 * mu) + (t2 / t) * mat.alpha
    D = (mat.t_b / t) * mu
    return OrthotropicConstants(A=A, B=B, C=C, D=D, beta=(t1 + t2) / t * mat.alpha)


def strain_energy_density(smemb: np.ndarray, eps: np.ndarray) -> float:
    """Strain energy per unit area, 0.5 * (S[eps]) : eps.

    ``smemb`` is the 3x3 Voigt operator from :func:`membrane_tangent`;
    ``eps`` is the symmetric in-plane strain as a 2x2 tensor in the same
    local frame.
    """
    eps = np.asarray(eps, dtype=float)
    if eps.shape != (2, 2) or abs(eps[0, 1] - eps[1, 0]) > 1e-12 * (np.abs(eps).max() + _EPS):
        raise ValueError("eps must be a symmetric 2x2 in-plane strain tensor")
    v = np.array([eps[0, 0], eps[1, 1], eps[0, 1] + eps[1, 0]])
    return 0.5 * float(v @ smemb @ v)
