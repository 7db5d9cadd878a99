"""Discrete surfaces: benchmark mesh generators, tangent frames, projectors.

A surface is a set of bilinear 4-node quadrilaterals embedded in 3D. All
constitutive and equilibrium quantities are evaluated at element quadrature
points in a local orthonormal tangent frame (e1, e2, n); the in-plane
projector is P = I - n (x) n and the normal projector is N = n (x) n.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DegenerateElementError

# 2x2 Gauss rule on the reference square [-1,1]^2 ("full integration" for
# bilinear quads) plus the centroid, which is the superconvergent
# stress-recovery point of this element.
_G = 1.0 / np.sqrt(3.0)
GAUSS_POINTS = np.array([[-_G, -_G], [_G, -_G], [_G, _G], [-_G, _G]])
GAUSS_WEIGHTS = np.ones(4)
CENTROID_POINT = np.zeros(2)

# Local corner coordinates, counterclockwise.
_CORNERS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])

# Local edge k runs from corner k to corner (k+1) % 4.
EDGE_CORNERS = ((0, 1), (1, 2), (2, 3), (3, 0))
# Midpoint of each local edge in reference coordinates.
EDGE_MIDPOINTS = np.array([[0.0, -1.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])


def shape_functions(xi: float, eta: float) -> np.ndarray:
    """Bilinear shape function values at a reference point, shape (4,)."""
    return 0.25 * (1.0 + _CORNERS[:, 0] * xi) * (1.0 + _CORNERS[:, 1] * eta)


def shape_gradients(xi: float, eta: float) -> np.ndarray:
    """Reference-coordinate gradients dN/d(xi,eta) at a point, shape (4, 2)."""
    out = np.empty((4, 2))
    out[:, 0] = 0.25 * _CORNERS[:, 0] * (1.0 + _CORNERS[:, 1] * eta)
    out[:, 1] = 0.25 * _CORNERS[:, 1] * (1.0 + _CORNERS[:, 0] * xi)
    return out


SHAPE_AT_GAUSS = np.stack([shape_functions(x, e) for x, e in GAUSS_POINTS])  # (4, 4)


@dataclass(frozen=True)
class TangentFrame:
    """Orthonormal surface frame: unit normal n and tangents e1, e2 = n x e1."""

    n: np.ndarray
    e1: np.ndarray
    e2: np.ndarray

    def __post_init__(self):
        for v in (self.n, self.e1, self.e2):
            if abs(np.linalg.norm(v) - 1.0) > 1e-12:
                raise ValueError("frame vectors must be unit length")
        if abs(self.n @ self.e1) > 1e-12 or abs(self.n @ self.e2) > 1e-12 or abs(self.e1 @ self.e2) > 1e-12:
            raise ValueError("frame vectors must be pairwise orthogonal")
        if np.linalg.norm(np.cross(self.e1, self.e2) - self.n) > 1e-12:
            raise ValueError("frame must be right-handed: e1 x e2 = n")

    @property
    def tangential_projector(self) -> np.ndarray:
        """P = I - n (x) n."""
        return np.eye(3) - np.outer(self.n, self.n)

    @property
    def normal_projector(self) -> np.ndarray:
        """N = n (x) n."""
        return np.outer(self.n, self.n)


@dataclass(frozen=True)
class ElementQuadrature:
    """Per-element geometric data at the 2x2 Gauss points and the centroid.

    B maps the 12 nodal displacement components of an element to the local
    in-plane strain (eps11, eps22, gamma12) through the projected surface
    gradient;  w is the area weight of each Gauss point.
    """

    B: np.ndarray          # (E, 4, 3, 12)
    w: np.ndarray          # (E, 4)
    n: np.ndarray          # (E, 4, 3)
    e1: np.ndarray         # (E, 4, 3)
    e2: np.ndarray         # (E, 4, 3)
    B_c: np.ndarray        # (E, 3, 12)   strain operator at the centroid
    n_c: np.ndarray        # (E, 3)
    e1_c: np.ndarray       # (E, 3)
    e2_c: np.ndarray       # (E, 3)
    centroid: np.ndarray   # (E, 3)
    area: np.ndarray       # (E,)


def _frames_and_strain_ops(coords: np.ndarray, points: np.ndarray):
    """Frames and strain-displacement operators at reference points.

    coords: (E, 4, 3) element corner coordinates; points: (Q, 2).
    Returns (B, w, n, e1, e2) with leading shape (E, Q).
    """
    ne, _, _ = coords.shape
    nq = points.shape[0]
    B = np.zeros((ne, nq, 3, 12))
    w = np.empty((ne, nq))
    n = np.empty((ne, nq, 3))
    e1 = np.empty((ne, nq, 3))
    e2 = np.empty((ne, nq, 3))
    for q, (xi, eta) in enumerate(points):
        dN = shape_gradients(xi, eta)                      # (4, 2)
        a1 = np.einsum("eai,a->ei", coords, dN[:, 0])       # (E, 3)
        a2 = np.einsum("eai,a->ei", coords, dN[:, 1])
        cr = np.cross(a1, a2)
        jac = np.linalg.norm(cr, axis=1)
        scale = np.linalg.norm(a1, axis=1) * np.linalg.norm(a2, axis=1)
        bad = jac <= 1e-12 * np.maximum(scale, 1e-300)
        if np.any(bad):
            raise DegenerateElementError(
                f"zero surface Jacobian at quadrature point {q} of elements "
                f"{np.flatnonzero(bad)[:8].tolist()}"
            )
        nq_ = cr / jac[:, None]
        e1q = a1 / np.linalg.norm(a1, axis=1)[:, None]
        e2q = np.cross(nq_, e1q)
        # Surface gradient of each shape function: g_a = dN_a1 A^1 + dN_a2 A^2
        # with A^b the contravariant tangent basis (metric inverse applied).
        g11 = np.einsum("ei,ei->e", a1, a1)
        g12 = np.einsum("ei,ei->e", a1, a2)
        g22 = np.einsum("ei,ei->e", a2, a2)
        det = g11 * g22 - g12 * g12
        A1 = (g22[:, None] * a1 - g12[:, None] * a2) / det[:, None]
        A2 = (g11[:, None] * a2 - g12[:, None] * a1) / det[:, None]
        g = dN[None, :, 0, None] * A1[:, None, :] + dN[None, :, 1, None] * A2[:, None, :]  # (E,4,3)
        b1 = np.einsum("eai,ei->ea", g, e1q)                # g_a . e1
        b2 = np.einsum("eai,ei->ea", g, e2q)
        for a in range(4):
            cols = slice(3 * a, 3 * a + 3)
            B[:, q, 0, cols] = b1[:, a, None] * e1q
            B[:, q, 1, cols] = b2[:, a, None] * e2q
            B[:, q, 2, cols] = b1[:, a, None] * e2q + b2[:, a, None] * e1q
        w[:, q] = jac
        n[:, q] = nq_
        e1[:, q] = e1q
        e2[:, q] = e2q
    return B, w, n, e1, e2


class SurfaceMesh:
    """Immutable discrete surface of bilinear quads.

    Parameters
    ----------
    nodes : (N, 3) float array of coordinates.
    elements : (M, 4) int array of corner indices, counterclockwise when seen
        from the positive-normal side; orientation must be consistent across
        the mesh (outward for closed surfaces).
    boundary_edges : optional mapping label -> (K, 2) int array of
        (element, local_edge) pairs; each referenced edge must lie on the
        mesh boundary.
    node_sets : optional mapping label -> int array of node indices.
    """

    def __init__(self, nodes, elements, boundary_edges=None, node_sets=None, *, validate=True):
        nodes = np.ascontiguousarray(np.asarray(nodes, dtype=float))
        elements = np.ascontiguousarray(np.asarray(elements, dtype=np.int64))
        if nodes.ndim != 2 or nodes.shape[1] != 3:
            raise ValueError("nodes must have shape (N, 3)")
        if elements.ndim != 2 or elements.shape[1] != 4:
            raise ValueError("elements must have shape (M, 4)")
        self.nodes = nodes
        self.elements = elements
        self.boundary_edges = {
            k: np.ascontiguousarray(np.asarray(v, dtype=np.int64).reshape(-1, 2))
            for k, v in (boundary_edges or {}).items()
        }
        self.node_sets = {
            k: np.ascontiguousarray(np.asarray(v, dtype=np.int64).ravel())
            for k, v in (node_sets or {}).items()
        }
        for arr in (self.nodes, self.elements, *self.boundary_edges.values(), *self.node_sets.values()):
            arr.setflags(write=False)
        if validate:
            self._validate()
            self.quadrature  # noqa: B018  -- force Jacobian checks now

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    def _validate(self):
        el = self.elements
        if el.size and (el.min() < 0 or el.max() >= self.n_nodes):
            raise ValueError("element references a node index out of range")
        if np.any(np.sort(el, axis=1)[:, :-1] == np.sort(el, axis=1)[:, 1:]):
            raise ValueError("element references a repeated node index")
        # Orientation consistency: every interior edge must be traversed once
        # in each direction; a directed edge seen twice flags a flipped quad.
        directed = {}
        for e in range(self.n_elements):
            for a, b in EDGE_CORNERS:
                key = (el[e, a], el[e, b])
                if key in directed:
                    raise ValueError(
                        f"inconsistent orientation: edge {key} traversed twice "
                        f"(elements {directed[key]} and {e})"
                    )
                directed[key] = e
        boundary = {k for k in directed if (k[1], k[0]) not in directed}
        for label, pairs in self.boundary_edges.items():
            for e, ledge in pairs:
                if not (0 <= ledge < 4) or not (0 <= e < self.n_elements):
                    raise ValueError(f"boundary set {label!r} references invalid edge ({e}, {ledge})")
                a, b = EDGE_CORNERS[ledge]
                if (el[e, a], el[e, b]) not in boundary:
                    raise ValueError(f"boundary set {label!r} contains a non-boundary edge ({e}, {ledge})")
        for label, idx in self.node_sets.items():
            if idx.size and (idx.min() < 0 or idx.max() >= self.n_nodes):
                raise ValueError(f"node set {label!r} references a node index out of range")

    @cached_property
    def quadrature(self) -> ElementQuadrature:
        coords = self.nodes[self.elements]                       # (E, 4, 3)
        B, w, n, e1, e2 = _frames_and_strain_ops(coords, GAUSS_POINTS)
        Bc, _, nc, e1c, e2c = _frames_and_strain_ops(coords, CENTROID_POINT[None, :])
        centroid = coords.mean(axis=1)
        quad = ElementQuadrature(
            B=B, w=w * GAUSS_WEIGHTS[None, :], n=n, e1=e1, e2=e2,
            B_c=Bc[:, 0], n_c=nc[:, 0], e1_c=e1c[:, 0], e2_c=e2c[:, 0],
            centroid=centroid, area=(w * GAUSS_WEIGHTS[None, :]).sum(axis=1),
        )
        for arr in vars(quad).values():
            arr.setflags(write=False)
        return quad

    @cached_property
    def _dof_scatter(self):
        """(rows, cols) int arrays scattering (E,12,12) element blocks to COO."""
        dofs = (3 * self.elements[:, :, None] + np.arange(3)[None, None, :]).reshape(-1, 12)
        rows = np.repeat(dofs, 12, axis=1).ravel()
        cols = np.tile(dofs, (1, 12)).ravel()
        return rows, cols

    def total_area(self) -> float:
        return float(self.quadrature.area.sum())


def tangent_frame_at(mesh: SurfaceMesh, element: int, local_coords) -> TangentFrame:
    """Orthonormal tangent frame of one element at reference coordinates.

    The frame is built from the isoparametric tangent vectors: e1 along the
    first tangent, n along their cross product (consistent with element
    orientation), e2 = n x e1.
    """
    xi, eta = float(local_coords[0]), float(local_coords[1])
    if not (-1.0 - 1e-12 <= xi <= 1.0 + 1e-12 and -1.0 - 1e-12 <= eta <= 1.0 + 1e-12):
        raise ValueError("local_coords must lie in the reference square [-1,1]^2")
    coords = mesh.nodes[mesh.elements[int(element)]][None, :, :]
    _, _, n, e1, e2 = _frames_and_strain_ops(coords, np.array([[xi, eta]]))
    return TangentFrame(n=n[0, 0], e1=e1[0, 0], e2=e2[0, 0])


def _equiangular_grid(n: int) -> np.ndarray:
    """n+1 cube-face coordinates in [-1, 1] with near-uniform arc spacing."""
    u = np.tan(0.25 * np.pi * np.linspace(-1.0, 1.0, n + 1))
    u[0], u[-1] = -1.0, 1.0
    return u


def make_spheroid_mesh(n_lat: int, n_lon: int, half: bool = True, *,
                       equatorial_radius: float = 1.0,
                       polar_radius: float = 0.5) -> SurfaceMesh:
    """Structured quad mesh of an oblate spheroid (default x^2+y^2+(2z)^2=1).

    The surface is meshed with cubed-sphere topology: a cube grid projected
    radially onto the unit sphere and scaled to the spheroid axes, so every
    element is a well-shaped quad (no pole degeneracies).  ``n_lon`` is the
    element count around the equator (a multiple of 8 so the four side faces
    split evenly and the symmetry plane falls on grid lines); ``n_lat`` is
    the element count along a pole-to-pole meridian and must exceed
    ``n_lon / 4`` (the part of the meridian crossing the two polar faces).
    (n_lat, n_lon) = (64, 128) yields 3072 elements on the half model.

    With ``half=True`` only the y >= 0 half is meshed, cut at the y = 0
    symmetry plane; the cut nodes form node set ``"symmetry"``.  Node sets
    ``"pin_a"``/``"pin_b"`` (and ``"pin_c"`` for the full model) mark
    canonical nodes for removing the remaining rigid-body modes.

    Element count: 4 * ne * nv + 2 * ne^2 for the full model with
    ne = n_lon / 4 and nv = n_lat - ne, exactly half that for the half model.
    """
    n_lat, n_lon = int(n_lat), int(n_lon)
    if n_lat < 2 or n_lon < 4:
        raise ValueError("resolution below minimum: need n_lat >= 2 and n_lon >= 4")
    if n_lon % 8:
        raise ValueError("n_lon must be a multiple of 8")
    ne = n_lon // 4
    nv = n_lat - ne
    if nv < 1:
        raise ValueError(f"n_lat must be at least n_lon/4 + 1 = {ne + 1}")
    a, c = float(equatorial_radius), float(polar_radius)
    if a <= 0 or c <= 0:
        raise ValueError("radii must be positive")

    u_eq = _equiangular_grid(ne)
    u_v = _equiangular_grid(nv)

    # (u-grid, v-grid, map (U, V) -> cube coordinates); all outward-oriented.
    faces = [
        (u_eq, u_v, lambda U, V: (np.ones_like(U), U, V)),      # +x
        (u_eq, u_v, lambda U, V: (-np.ones_like(U), -U, V)),    # -x
        (u_eq, u_v, lambda U, V: (-U, np.ones_like(U), V)),     # +y
        (u_eq, u_v, lambda U, V: (U, -np.ones_like(U), V)),     # -y
        (u_eq, u_eq, lambda U, V: (U, V, np.ones_like(U))),     # +z
        (u_eq, u_eq, lambda U, V: (U, -V, -np.ones_like(U))),   # -z
    ]

    node_ids: dict[tuple, int] = {}
    cube_nodes: list[tuple] = []
    elems = []
    for ug, vg, to_cube in faces:
        U, V = np.meshgrid(ug, vg, indexing="ij")
        cx, cy, cz = to_cube(U, V)
        nu, nvf = ug.size - 1, vg.size - 1
        ids = np.empty((nu + 1, nvf + 1), dtype=np.int64)
        for i in range(nu + 1):
            for j in range(nvf + 1):
                key = (round(cx[i, j], 12), round(cy[i, j], 12), round(cz[i, j], 12))
                if key not in node_ids:
                    node_ids[key] = len(cube_nodes)
                    cube_nodes.append((cx[i, j], cy[i, j], cz[i, j]))
                ids[i, j] = node_ids[key]
        for i in range(nu):
            for j in range(nvf):
                elems.append((ids[i, j], ids[i + 1, j], ids[i + 1, j + 1], ids[i, j + 1]))

    cube = np.array(cube_nodes)
    nodes = cube / np.linalg.norm(cube, axis=1)[:, None]
    nodes[np.abs(cube[:, 1]) == 0.0, 1] = 0.0
    nodes *= (a, a, c)
    elements = np.array(elems, dtype=np.int64)

    if half:
        keep = nodes[elements, 1].sum(axis=1) > 0.0
        elements = elements[keep]
        used = np.unique(elements)
        remap = -np.ones(nodes.shape[0], dtype=np.int64)
        remap[used] = np.arange(used.size)
        elements = remap[elements]
        nodes = nodes[used]

    node_sets = {}
    y0 = np.flatnonzero(nodes[:, 1] == 0.0)
    if half:
        node_sets["symmetry"] = y0
        node_sets["pin_a"] = np.array([y0[np.argmax(nodes[y0, 0])]])
        node_sets["pin_b"] = np.array([y0[np.argmin(nodes[y0, 0])]])
    else:
        node_sets["pin_a"] = np.array([int(np.argmax(nodes[:, 2]))])
        node_sets["pin_b"] = np.array([int(np.argmin(nodes[:, 2]))])
        meridian = y0[nodes[y0, 0] > 0]
        node_sets["pin_c"] = np.array([meridian[np.argmax(nodes[meridian, 0])]])
    return SurfaceMesh(nodes, elements, node_sets=node_sets)


def make_strip_mesh(nx: int, ny: int, *, length: float = 1.0, width: float = 0.5,
                    load_length: float = 0.1, load_center: float | None = None) -> SurfaceMesh:
    """Planar nx-by-ny quad grid on [0, length] x [0, width] at z = 0.

    Boundary edge labels: ``"clamped"`` is the whole x = 0 short side,
    ``"loaded"`` is the sub-segment of the x = length side of length
    ``load_length`` centered at y = ``load_center`` (mid-side by default,
    quantized to whole element edges), ``"free"`` is the rest.  Node set
    ``"clamped"`` holds the x = 0 nodes.
    """
    nx, ny = int(nx), int(ny)
    if nx < 1 or ny < 1:
        raise ValueError("nx and ny must be at least 1")
    if load_center is None:
        load_center = width / 2.0
    xs = np.linspace(0.0, length, nx + 1)
    ys = np.linspace(0.0, width, ny + 1)
    nodes = np.zeros(((nx + 1) * (ny + 1), 3))
    nodes[:, 0] = np.repeat(xs, ny + 1)
    nodes[:, 1] = np.tile(ys, nx + 1)

    def nid(i, j):
        return i * (ny + 1) + j

    elems = []
    for i in range(nx):
        for j in range(ny):
            elems.append((nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)))
    elements = np.array(elems, dtype=np.int64)

    def eid(i, j):
        return i * ny + j

    clamped = [(eid(0, j), 3) for j in range(ny)]          # local edge 3: x = 0 side
    right = [(eid(nx - 1, j), 1) for j in range(ny)]        # local edge 1: x = length side
    lo, hi = load_center - load_length / 2.0, load_center + load_length / 2.0
    mids = np.array([(ys[j] + ys[j + 1]) / 2.0 for j in range(ny)])
    sel = np.flatnonzero((mids >= lo - 1e-12) & (mids <= hi + 1e-12))
    if sel.size == 0:
        sel = np.array([int(np.argmin(np.abs(mids - load_center)))])
    loaded = [right[j] for j in sel]
    top = [(eid(i, ny - 1), 2) for i in range(nx)]
    bottom = [(eid(i, 0), 0) for i in range(nx)]
    free = [e for e in right if e not in loaded] + top + bottom

    node_sets = {"clamped": np.array([nid(0, j) for j in range(ny + 1)], dtype=np.int64)}
    return SurfaceMesh(
        nodes, elements,
        boundary_edges={"clamped": clamped, "loaded": loaded, "free": free},
        node_sets=node_sets,
    )
