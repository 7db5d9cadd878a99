# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled element kernels: fused constitutive build + stiffness contraction.

Semantics match fibermem._core_np exactly (same formulas, serial fixed-order
accumulation); only the loop structure differs.
"""

from libc.math cimport sqrt

import numpy as np

cimport numpy as cnp

cnp.import_array()


def element_stiffness_batch(const double[:, :, :, ::1] B, const double[:, ::1] w,
                            const double[:, :, ::1] e1, const double[:, :, ::1] e2,
                            const double[:, ::1] s, const double[::1] t1, const double[::1] t2,
                            double tb, double delta, double mu, double alpha):
    cdef Py_ssize_t E = B.shape[0], Q = B.shape[1]
    cdef Py_ssize_t e, q, i, j
    cdef double c, sn, r, wq, a1f, a2f
    cdef double v0, v1, v2, p0, p1, p2
    cdef double C00, C01, C02, C11, C12, C22
    cdef double b0, b1, b2
    cdef double base00 = tb * (delta + 2.0 * mu)
    cdef double base01 = tb * delta
    cdef double base22 = tb * mu
    cdef double CB0[12]
    cdef double CB1[12]
    cdef double CB2[12]

    out = np.zeros((E, 12, 12))
    cdef double[:, :, ::1] K = out

    for e in range(E):
        a1f = alpha * t1[e]
        a2f = alpha * t2[e]
        for q in range(Q):
            c = s[e, 0] * e1[e, q, 0] + s[e, 1] * e1[e, q, 1] + s[e, 2] * e1[e, q, 2]
            sn = s[e, 0] * e2[e, q, 0] + s[e, 1] * e2[e, q, 1] + s[e, 2] * e2[e, q, 2]
            r = sqrt(c * c + sn * sn)
            if r < 1e-12:
                r = 1.0
            c /= r
            sn /= r
            # fiber dyads in Voigt form: v for s, p for the perpendicular family
            v0 = c * c
            v1 = sn * sn
            v2 = c * sn
            p0 = v1
            p1 = v0
            p2 = -v2
            C00 = base00 + a1f * v0 * v0 + a2f * p0 * p0
            C01 = base01 + a1f * v0 * v1 + a2f * p0 * p1
            C02 = a1f * v0 * v2 + a2f * p0 * p2
            C11 = base00 + a1f * v1 * v1 + a2f * p1 * p1
            C12 = a1f * v1 * v2 + a2f * p1 * p2
            C22 = base22 + a1f * v2 * v2 + a2f * p2 * p2
            wq = w[e, q]
            for j in range(12):
                b0 = B[e, q, 0, j]
                b1 = B[e, q, 1, j]
                b2 = B[e, q, 2, j]
                CB0[j] = wq * (C00 * b0 + C01 * b1 + C02 * b2)
                CB1[j] = wq * (C01 * b0 + C11 * b1 + C12 * b2)
                CB2[j] = wq * (C02 * b0 + C12 * b1 + C22 * b2)
            for i in range(12):
                b0 = B[e, q, 0, i]
                b1 = B[e, q, 1, i]
                b2 = B[e, q, 2, i]
                for j in range(i, 12):
                    K[e, i, j] += b0 * CB0[j] + b1 * CB1[j] + b2 * CB2[j]
    # mirror the upper triangle
    for e in range(E):
        for i in range(12):
            for j in range(i + 1, 12):
                K[e, j, i] = K[e, i, j]
    return out


def centroid_strain_batch(const double[:, :, ::1] B_c, const double[:, ::1] u_elem):
    cdef Py_ssize_t E = B_c.shape[0]
    cdef Py_ssize_t e, i, j
    cdef double acc
    out = np.empty((E, 3))
    cdef double[:, ::1] eps = out
    for e in range(E):
        for i in range(3):
            acc = 0.0
            for j in range(12):
                acc += B_c[e, i, j] * u_elem[e, j]
            eps[e, i] = acc
    return out
