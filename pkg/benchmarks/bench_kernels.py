#!/usr/bin/env python3
"""Compare the compiled element kernels against the numpy fallback.

Times the batched element-stiffness kernel (the hot loop of every sizing
iteration) and the centroid strain recovery on realistic mesh sizes, plus
one full assemble-and-solve pass so the kernel share of an iteration is
visible.  Run from the repository root:

    python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from fibermem import kernels
from fibermem.fem import LoadCase, assemble_and_solve
from fibermem.geometry import make_spheroid_mesh
from fibermem.material import MembraneMaterial


def time_call(fn, *args, repeats=7):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_mesh(n):
    mesh = make_spheroid_mesh(2 * n, 4 * n, half=True)
    quad = mesh.quadrature
    rng = np.random.default_rng(0)
    phi = rng.uniform(0, np.pi, mesh.n_elements)
    s = np.cos(phi)[:, None] * quad.e1_c + np.sin(phi)[:, None] * quad.e2_c
    t1 = rng.uniform(0, 0.004, mesh.n_elements)
    t2 = rng.uniform(0, 0.004, mesh.n_elements)
    args = (quad.B, quad.w, quad.e1, quad.e2, s, t1, t2, 0.005, 0.32967, 0.38461, 1.0)

    u = rng.normal(size=(mesh.n_elements, 12))
    rows = [f"elements = {mesh.n_elements}"]
    t_np = time_call(kernels.numpy_impl.element_stiffness_batch, *args)
    rows.append(f"  stiffness batch   numpy    {1e3 * t_np:8.2f} ms")
    if kernels.USING_COMPILED:
        t_cy = time_call(kernels.compiled_impl.element_stiffness_batch, *args)
        rows.append(f"  stiffness batch   compiled {1e3 * t_cy:8.2f} ms   ({t_np / t_cy:4.1f}x)")
    t_np = time_call(kernels.numpy_impl.centroid_strain_batch, quad.B_c, u)
    rows.append(f"  centroid strains  numpy    {1e3 * t_np:8.2f} ms")
    if kernels.USING_COMPILED:
        t_cy = time_call(kernels.compiled_impl.centroid_strain_batch, quad.B_c,
                         np.ascontiguousarray(u))
        rows.append(f"  centroid strains  compiled {1e3 * t_cy:8.2f} ms   ({t_np / t_cy:4.1f}x)")

    material = MembraneMaterial(E=1.0, nu=0.3, t_b=0.005, alpha=1.0)
    loads = LoadCase(pressure=10.0, dirichlet={"symmetry": "y", "pin_a": "xz", "pin_b": "z"})
    t_solve = time_call(lambda: assemble_and_solve(mesh, None, material, loads), repeats=3)
    rows.append(f"  assemble + solve  full     {1e3 * t_solve:8.2f} ms (sparse factorization dominates)")
    return "\n".join(rows)


def main():
    print(f"compiled extension available: {kernels.USING_COMPILED}")
    if not kernels.USING_COMPILED:
        print("(build it with `pip install -e .` or `python3 setup.py build_ext --inplace`)")
    for n in (16, 32, 64):
        print()
        print(bench_mesh(n))


if __name__ == "__main__":
    main()
