"""Hot-kernel selection: compiled extension if built, numpy fallback otherwise.

Set the environment variable ``FIBERMEM_NO_COMPILED=1`` before import to
force the numpy path.  ``benchmarks/bench_kernels.py`` compares the two.
"""

from __future__ import annotations

import os

import numpy as np

from . import _core_np as numpy_impl

compiled_impl = None
if not os.environ.get("FIBERMEM_NO_COMPILED"):
    try:
        from . import _core as compiled_impl  # type: ignore[no-redef]
    except ImportError:
        compiled_impl = None

USING_COMPILED = compiled_impl is not None
_active = compiled_impl if USING_COMPILED else numpy_impl

constitutive_batch = numpy_impl.constitutive_batch


def element_stiffness_batch(B, w, e1, e2, s, t1, t2, tb, delta, mu, alpha):
    """Batched K_e = sum_q w_q B_q^T C_q B_q over all elements, (E, 12, 12)."""
    args = (np.ascontiguousarray(B), np.ascontiguousarray(w),
            np.ascontiguousarray(e1), np.ascontiguousarray(e2),
            np.ascontiguousarray(s, dtype=float),
            np.ascontiguousarray(t1, dtype=float), np.ascontiguousarray(t2, dtype=float),
            float(tb), float(delta), float(mu), float(alpha))
    return _active.element_stiffness_batch(*args)


def centroid_strain_batch(B_c, u_elem):
    """Local Voigt strains at element centroids, (E, 3)."""
    return _active.centroid_strain_batch(np.ascontiguousarray(B_c),
                                         np.ascontiguousarray(u_elem))
