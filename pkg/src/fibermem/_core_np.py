"""Numpy implementations of the hot element kernels.

Drop-in fallback for the compiled extension ``fibermem._core``; both expose
the same functions with identical semantics.  Reductions use fixed
summation orders, so results are reproducible run to run.
"""

from __future__ import annotations

import numpy as np


def _fiber_components(e1, e2, s):
    """Normalized in-plane fiber components at every (element, point)."""
    c = np.einsum("eqk,ek->eq", e1, s)
    sn = np.einsum("eqk,ek->eq", e2, s)
    r = np.hypot(c, sn)
    r = np.where(r < 1e-12, 1.0, r)
    return c / r, sn / r


def constitutive_batch(e1, e2, s, t1, t2, tb, delta, mu, alpha):
    """Local 3x3 Voigt stiffness at every (element, point), shape (E, Q, 3, 3)."""
    c, sn = _fiber_components(e1, e2, s)
    v1 = np.stack([c * c, sn * sn, c * sn], axis=-1)            # (E, Q, 3)
    v2 = np.stack([sn * sn, c * c, -c * sn], axis=-1)
    base = tb * np.array([
        [delta + 2 * mu, delta, 0.0],
        [delta, delta + 2 * mu, 0.0],
        [0.0, 0.0, mu],
    ])
    C = np.broadcast_to(base, v1.shape[:2] + (3, 3)).copy()
    a1 = (alpha * np.asarray(t1))[:, None, None, None]
    a2 = (alpha * np.asarray(t2))[:, None, None, None]
    C += a1 * v1[..., :, None] * v1[..., None, :]
    C += a2 * v2[..., :, None] * v2[..., None, :]
    return C


def element_stiffness_batch(B, w, e1, e2, s, t1, t2, tb, delta, mu, alpha):
    """Element stiffness matrices K_e = sum_q w_q B_q^T C_q B_q, shape (E, 12, 12)."""
    C = constitutive_batch(e1, e2, s, t1, t2, tb, delta, mu, alpha)
    CB = np.einsum("eqab,eqbj->eqaj", C, B)
    K = np.einsum("eqai,eq,eqaj->eij", B, w, CB)
    return 0.5 * (K + np.swapaxes(K, 1, 2))


def centroid_strain_batch(B_c, u_elem):
    """Local Voigt strains (eps11, eps22, gamma12) at element centroids, (E, 3)."""
    return np.einsum("eij,ej->ei", B_c, u_elem)
