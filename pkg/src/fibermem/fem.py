"""Membrane equilibrium: assembly, solve, force recovery, design sensitivities.

The discrete problem is the virtual-work identity: find nodal displacements
u (3 components per node) such that the thickness-integrated in-plane stress
M balances the applied loads for every admissible test field.  Element
stiffness uses 2x2 Gauss quadrature ("full integration"); membrane forces
and design sensitivities are recovered at element centroids, the
superconvergent point of the bilinear quad.

Design data is duck-typed: anything with per-element arrays ``t1``, ``t2``
and unit tangent directions ``s`` works (see ``fibermem.optimizer`` for the
concrete DesignField).  ``design=None`` means an unreinforced membrane.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .errors import InvalidLoadError, SingularSystemError
from .geometry import EDGE_CORNERS, EDGE_MIDPOINTS, SHAPE_AT_GAUSS, SurfaceMesh, tangent_frame_at
from .material import MembraneMaterial, plane_stress_moduli

_EPS = np.finfo(float).eps
_AXES = {"x": 0, "y": 1, "z": 2}

RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class LoadCase:
    """Pressure along the surface normal, edge tractions, and constraints.

    ``edge_tractions`` maps a boundary-edge label to a force-per-length
    vector; tractions must be tangent to the surface at the edge.
    ``dirichlet`` maps a node-set label to constrained components, given
    either as a string like ``"xz"`` (zero values) or a mapping like
    ``{"x": 0.0}``.
    """

    pressure: float = 0.0
    edge_tractions: Mapping[str, Sequence[float]] = field(default_factory=dict)
    dirichlet: Mapping[str, Mapping[str, float] | str] = field(default_factory=dict)


@dataclass(frozen=True)
class PointForces:
    """Membrane force tensor at every element centroid, in the local frame.

    Principal values are ordered by magnitude, |M_I| >= |M_II|; ``direction``
    is the unit tangent direction of M_I.  ``degenerate`` flags magnitude
    ties, where the principal direction is not unique.
    """

    m11: np.ndarray
    m22: np.ndarray
    m12: np.ndarray
    M_I: np.ndarray
    M_II: np.ndarray
    direction: np.ndarray      # (E, 3)
    degenerate: np.ndarray     # (E,) bool

    def local_tensor(self, e: int) -> np.ndarray:
        return np.array([[self.m11[e], self.m12[e]], [self.m12[e], self.m22[e]]])


@dataclass(frozen=True)
class MembraneState:
    """Solved equilibrium: nodal displacements, compliance, recovered forces."""

    u: np.ndarray              # (N, 3)
    compliance: float
    point_forces: PointForces


def _design_arrays(mesh: SurfaceMesh, design):
    ne = mesh.n_elements
    if design is None:
        s = np.zeros((ne, 3))
        s[:, 0] = 1.0
        return np.zeros(ne), np.zeros(ne), s
    return (np.asarray(design.t1, dtype=float),
            np.asarray(design.t2, dtype=float),
            np.asarray(design.s, dtype=float))


def element_stiffness(mesh: SurfaceMesh, element: int, design_point, material: MembraneMaterial) -> np.ndarray:
    """12x12 stiffness of one element; ``design_point`` needs t1, t2, s."""
    quad = mesh.quadrature
    e = int(element)
    delta, mu = plane_stress_moduli(material.E, material.nu)
    K = kernels.element_stiffness_batch(
        quad.B[e:e + 1], quad.w[e:e + 1], quad.e1[e:e + 1], quad.e2[e:e + 1],
        np.asarray(design_point.s, dtype=float)[None, :],
        np.array([design_point.t1], dtype=float), np.array([design_point.t2], dtype=float),
        material.t_b, delta, mu, material.alpha)
    return K[0]


def assemble_stiffness(mesh: SurfaceMesh, design, material: MembraneMaterial) -> sp.csr_matrix:
    """Global stiffness in CSR form (no constraints applied)."""
    quad = mesh.quadrature
    t1, t2, s = _design_arrays(mesh, design)
    delta, mu = plane_stress_moduli(material.E, material.nu)
    K_el = kernels.element_stiffness_batch(
        quad.B, quad.w, quad.e1, quad.e2, s, t1, t2, material.t_b, delta, mu, material.alpha)
    rows, cols = mesh._dof_scatter
    n = 3 * mesh.n_nodes
    return sp.coo_matrix((K_el.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def consistent_loads(mesh: SurfaceMesh, loads: LoadCase) -> np.ndarray:
    """Consistent nodal force vector (3N,) from pressure and edge tractions."""
    quad = mesh.quadrature
    F = np.zeros((mesh.n_nodes, 3))
    if loads.pressure:
        # f = p n per quadrature point, distributed with the shape functions
        contrib = loads.pressure * np.einsum(
            "qa,eq,eqi->eai", SHAPE_AT_GAUSS, quad.w, quad.n)
        np.add.at(F, mesh.elements.ravel(), contrib.reshape(-1, 3))
    for label, traction in loads.edge_tractions.items():
        if label not in mesh.boundary_edges:
            raise InvalidLoadError(f"no boundary edge set named {label!r}")
        t = np.asarray(traction, dtype=float)
        tnorm = np.linalg.norm(t)
        if tnorm == 0.0:
            continue
        for e, ledge in mesh.boundary_edges[label]:
            frame = tangent_frame_at(mesh, e, EDGE_MIDPOINTS[ledge])
            if abs(t @ frame.n) > 1e-10 * tnorm:
                raise InvalidLoadError(
                    f"edge traction on {label!r} has a normal component at "
                    f"element {e}: tractions must be tangent to the surface")
            na, nb = (mesh.elements[e, c] for c in EDGE_CORNERS[ledge])
            length = np.linalg.norm(mesh.nodes[nb] - mesh.nodes[na])
            F[na] += 0.5 * length * t
            F[nb] += 0.5 * length * t
    return F.ravel()


def _normalized_dirichlet(mapping) -> dict[str, dict[int, float]]:
    out: dict[str, dict[int, float]] = {}
    for label, comps in mapping.items():
        if isinstance(comps, str):
            out[label] = {_AXES[c]: 0.0 for c in comps}
        else:
            out[label] = {_AXES[c]: float(v) for c, v in comps.items()}
    return out


def _planar_normal_axis(mesh: SurfaceMesh) -> int | None:
    """Coordinate axis of the mesh normal if the mesh is planar, else None."""
    n = mesh.quadrature.n
    n0 = n[0, 0]
    if np.abs(n - n0).max() > 1e-9:
        return None
    axis = int(np.argmax(np.abs(n0)))
    return axis if abs(abs(n0[axis]) - 1.0) <= 1e-12 else None


def constrained_dofs(mesh: SurfaceMesh, loads: LoadCase) -> tuple[np.ndarray, np.ndarray]:
    """Fixed dof indices and prescribed values from the load case.

    A flat mesh has no stiffness against out-of-plane displacement, so for
    planar geometries the out-of-plane component of every node is
    constrained automatically.
    """
    fixed: dict[int, float] = {}
    axis = _planar_normal_axis(mesh)
    if axis is not None:
        for node in range(mesh.n_nodes):
            fixed[3 * node + axis] = 0.0
    for label, comps in _normalized_dirichlet(loads.dirichlet).items():
        if label not in mesh.node_sets:
            raise ValueError(f"no node set named {label!r}")
        for node in mesh.node_sets[label]:
            for comp, value in comps.items():
                fixed[3 * int(node) + comp] = value
    idx = np.array(sorted(fixed), dtype=np.int64)
    vals = np.array([fixed[i] for i in idx])
    return idx, vals


def _count_null_modes(K_ff: sp.spmatrix) -> int:
    n = K_ff.shape[0]
    scale = K_ff.diagonal().mean() + _EPS
    tol = 1e-8 * scale
    if n <= 600:
        evals = np.linalg.eigvalsh(K_ff.toarray())
        return int(np.sum(evals < tol))
    k = min(12, n - 2)
    try:
        evals = spla.eigsh(K_ff.tocsc() + 1e-12 * scale * sp.identity(n, format="csc"),
                           k=k, sigma=0.0, which="LM", return_eigenvectors=False)
        return int(np.sum(np.abs(evals) < tol))
    except Exception:
        return -1


def assemble_and_solve(mesh: SurfaceMesh, design, material: MembraneMaterial,
                       loads: LoadCase) -> MembraneState:
    """Solve equilibrium and recover centroidal membrane forces.

    The solution satisfies the constrained system to a relative residual of
    1e-10; compliance is 0.5 * F . u with F the applied consistent loads.
    """
    K = assemble_stiffness(mesh, design, material)
    F = consistent_loads(mesh, loads)
    fixed_idx, fixed_val = constrained_dofs(mesh, loads)
    n = K.shape[0]
    free = np.setdiff1d(np.arange(n), fixed_idx, assume_unique=True)
    u = np.zeros(n)
    u[fixed_idx] = fixed_val

    K_ff = K[free][:, free].tocsc()
    rhs = F[free] - K[free][:, fixed_idx] @ fixed_val
    if free.size:
        try:
            lu = spla.splu(K_ff)
            u_f = lu.solve(rhs)
        except RuntimeError as exc:
            count = _count_null_modes(K_ff)
            raise SingularSystemError(
                f"constrained stiffness is singular ({count} null modes); "
                "add constraints removing the remaining rigid modes", count) from exc
        ref = np.linalg.norm(rhs)
        resid = np.linalg.norm(K_ff @ u_f - rhs)
        if not np.isfinite(u_f).all() or (ref > 0 and resid > RESIDUAL_TOL * ref):
            count = _count_null_modes(K_ff)
            raise SingularSystemError(
                f"solve failed the residual check (|Ku-F|/|F| = {resid / (ref + _EPS):.2e}, "
                f"{count} null modes)", count)
        u[free] = u_f

    compliance = 0.5 * float(F @ u)
    forces = recover_membrane_forces(mesh, design, material, u.reshape(-1, 3))
    return MembraneState(u=u.reshape(-1, 3), compliance=compliance, point_forces=forces)


def _canonical_sign(d: np.ndarray) -> np.ndarray:
    """Flip axial directions so the largest-magnitude component is positive."""
    idx = np.argmax(np.abs(d), axis=1)
    signs = np.sign(d[np.arange(d.shape[0]), idx])
    signs = np.where(signs == 0, 1.0, signs)
    return d * signs[:, None]


def principal_membrane_forces(m11, m22, m12):
    """Magnitude-ordered principal values and the in-plane angle of M_I.

    Returns (M_I, M_II, phi, degenerate) with phi measured from the local e1
    axis.  ``degenerate`` marks magnitude ties |M_I| = |M_II|.
    """
    avg = 0.5 * (m11 + m22)
    r = np.hypot(0.5 * (m11 - m22), m12)
    p1, p2 = avg + r, avg - r
    phi1 = 0.5 * np.arctan2(2.0 * m12, m11 - m22)
    first = np.abs(p1) >= np.abs(p2)
    M_I = np.where(first, p1, p2)
    M_II = np.where(first, p2, p1)
    phi = np.where(first, phi1, phi1 + 0.5 * np.pi)
    gap = np.abs(np.abs(M_I) - np.abs(M_II))
    degenerate = gap <= 1e-12 * (np.abs(M_I) + np.abs(M_II) + _EPS)
    return M_I, M_II, phi, degenerate


def recover_membrane_forces(mesh: SurfaceMesh, design, material: MembraneMaterial,
                            u: np.ndarray) -> PointForces:
    """Membrane force tensor and principal data at every element centroid."""
    quad = mesh.quadrature
    t1, t2, s = _design_arrays(mesh, design)
    delta, mu = plane_stress_moduli(material.E, material.nu)
    u_elem = np.asarray(u, dtype=float).reshape(-1, 3)[mesh.elements].reshape(mesh.n_elements, 12)
    eps = kernels.centroid_strain_batch(quad.B_c, u_elem)
    C = kernels.constitutive_batch(quad.e1_c[:, None], quad.e2_c[:, None], s, t1, t2,
                                   material.t_b, delta, mu, material.alpha)[:, 0]
    m = np.einsum("eij,ej->ei", C, eps)
    M_I, M_II, phi, degenerate = principal_membrane_forces(m[:, 0], m[:, 1], m[:, 2])
    direction = _canonical_sign(np.cos(phi)[:, None] * quad.e1_c + np.sin(phi)[:, None] * quad.e2_c)
    return PointForces(m11=m[:, 0], m22=m[:, 1], m12=m[:, 2],
                       M_I=M_I, M_II=M_II, direction=direction, degenerate=degenerate)


def quadrature_strains(mesh: SurfaceMesh, u: np.ndarray) -> np.ndarray:
    """Local Voigt strains at the 2x2 Gauss points, shape (E, 4, 3)."""
    u_elem = np.asarray(u, dtype=float).reshape(-1, 3)[mesh.elements].reshape(mesh.n_elements, 12)
    return np.einsum("eqij,ej->eqi", mesh.quadrature.B, u_elem)


def pointwise_sensitivity(eps: np.ndarray, s_local: np.ndarray, alpha: float) -> tuple[float, float]:
    """Compliance sensitivities of the two fiber families at one point.

    ``eps`` is the 2x2 in-plane strain and ``s_local`` the unit fiber
    direction, both in the same local tangent basis.  Returns
    (A_1, A_2) = alpha * (s . eps s)^2 for s and its perpendicular.
    """
    eps = np.asarray(eps, dtype=float)
    s_local = np.asarray(s_local, dtype=float)
    sp_ = np.array([-s_local[1], s_local[0]])
    return (float(alpha * (s_local @ eps @ s_local) ** 2),
            float(alpha * (sp_ @ eps @ sp_) ** 2))


def element_sensitivities(mesh: SurfaceMesh, design, material: MembraneMaterial,
                          u: np.ndarray) -> np.ndarray:
    """Area-averaged sensitivities A at every design point, shape (E, 2).

    The pointwise value alpha * (s . eps s)^2 is evaluated at each Gauss
    point and averaged with the stiffness quadrature weights, which makes
    -0.5 * area * A the exact derivative of compliance with respect to the
    element's fiber thickness.
    """
    quad = mesh.quadrature
    _, _, s = _design_arrays(mesh, design)
    eps = quadrature_strains(mesh, u)
    c = np.einsum("eqk,ek->eq", quad.e1, s)
    sn = np.einsum("eqk,ek->eq", quad.e2, s)
    r = np.hypot(c, sn)
    r = np.where(r < 1e-12, 1.0, r)
    c, sn = c / r, sn / r
    v1 = np.stack([c * c, sn * sn, c * sn], axis=-1)
    v2 = np.stack([sn * sn, c * c, -c * sn], axis=-1)
    proj1 = np.einsum("eqi,eqi->eq", v1, eps)
    proj2 = np.einsum("eqi,eqi->eq", v2, eps)
    wsum = quad.w.sum(axis=1)
    A1 = material.alpha * np.einsum("eq,eq->e", quad.w, proj1 ** 2) / wsum
    A2 = material.alpha * np.einsum("eq,eq->e", quad.w, proj2 ** 2) / wsum
    return np.stack([A1, A2], axis=1)
