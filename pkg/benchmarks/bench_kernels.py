"""Numba kernels against their pure-numpy twins on heat-equation matrices.

    python benchmarks/bench_kernels.py [--repeat 5] [--sizes 0.08 0.04 0.02]

Both variants are imported directly, so the PARAREAL_HEAT_NUMBA flag does
not matter here.  The first numba call is excluded from the timings.
"""

import argparse
import timeit

import numpy as np

from parareal_heat.fem import StripCoefficients, assemble
from parareal_heat.mesh import StripGeometry, build_strip_mesh
from parareal_heat.sparse import csr_matvec_numba, csr_matvec_numpy, pcg_numba, pcg_numpy


def implicit_euler_matrix(target_h):
    mesh = build_strip_mesh(StripGeometry(0.2), target_h)
    sys_ = assemble(mesh, StripCoefficients.from_jump(100.0))
    return sys_.mass.linear_combination(1.0, sys_.stiffness, 0.01)


def best_of(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--sizes", type=float, nargs="+", default=[0.08, 0.04, 0.02, 0.01])
    args = parser.parse_args()

    print(f"{'h':>6} {'dofs':>7} {'kernel':>7} {'numba [us]':>11} {'numpy [us]':>11} {'speedup':>8}")
    for h in args.sizes:
        A = implicit_euler_matrix(h)
        d = A.dim
        rng = np.random.default_rng(0)
        x = rng.standard_normal(d)
        out = np.empty(d)
        b = A @ x
        dinv = 1.0 / A.diagonal()
        cap = 10 * d

        def mv_nb():
            csr_matvec_numba(A.indptr, A.indices, A.data, x, out)

        def mv_np():
            csr_matvec_numpy(A.indptr, A.indices, A.data, x, out)

        def cg_nb():
            pcg_numba(A.indptr, A.indices, A.data, dinv, b, np.zeros(d), 1e-12, cap)

        def cg_np():
            pcg_numpy(A.indptr, A.indices, A.data, dinv, b, np.zeros(d), 1e-12, cap)

        mv_nb()
        cg_nb()
        for name, fast, slow, number in (("matvec", mv_nb, mv_np, 200), ("pcg", cg_nb, cg_np, 5)):
            t_nb = best_of(fast, args.repeat, number)
            t_np = best_of(slow, args.repeat, number)
            print(f"{h:6.3f} {d:7d} {name:>7} {t_nb * 1e6:11.1f} {t_np * 1e6:11.1f} {t_np / t_nb:8.2f}")


if __name__ == "__main__":
    main()
