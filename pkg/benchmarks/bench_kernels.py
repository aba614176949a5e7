"""Benchmark the certification hot loops: numba kernels vs the numpy path.

Both backends are called directly (independent of DIVBELL_DISABLE_NUMBA),
so one run reports the full comparison.  The timed pipeline is the one
used by `divbell bellman-verify`: derivative tables, the direction-form
sweep, and the shared-tau golden-section search.

Usage:
    python benchmarks/bench_kernels.py [npoints] [ndirections]
"""

import sys
import time

import numpy as np

from divbell import _kernels as K
from divbell import bellman as bl
from divbell import presets as ps


def certify_pipeline(tables, direction_forms, tau_maximin, params, zetas, etas, s1, s2):
    u = np.abs(zetas)
    v = np.abs(etas)
    ph1 = zetas / u
    ph2 = etas / v
    t = tables(params.p, params.q, params.delta, u, v)
    crr, ctt = 0.5 * t[4], 0.5 * t[7]
    drr, dtt = 0.5 * t[6], 0.5 * t[8]
    m = 0.5 * t[5]
    drift = 0.5 * (u * t[2] + v * t[3] - t[1])
    H = direction_forms(crr, ctt, drr, dtt, m, ph1, ph2, s1, s2)
    a1sq = np.abs(s1) ** 2
    a2sq = np.abs(s2) ** 2
    return tau_maximin(H, a1sq, a2sq, drift, u * u, v * v, params.delta)


def timeit(fn, repeats=5):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    npoints = int(sys.argv[1]) if len(sys.argv) > 1 else 10_000
    ndirs = int(sys.argv[2]) if len(sys.argv) > 2 else 256
    params = bl.BellmanParams(4.0)
    rng = ps.rng_for(7, "bench")
    zetas, etas = bl.sample_certification_points(params, npoints, rng)
    s1, s2 = bl.unit_directions(ndirs)

    print(f"points={npoints} directions={len(s1)} p={params.p}")
    print(f"numba available: {K.HAVE_NUMBA}   active backend: {K.backend_name()}")

    t_np, out_np = timeit(lambda: certify_pipeline(
        K.bellman_tables_np, K.direction_forms_np, K.tau_maximin_np,
        params, zetas, etas, s1, s2))
    print(f"numpy : {t_np:8.3f} s")

    if K.HAVE_NUMBA:
        # first call pays the jit compilation; time it separately
        t0 = time.perf_counter()
        certify_pipeline(K.bellman_tables_nb, K.direction_forms_nb,
                         K.tau_maximin_nb, params, zetas, etas, s1, s2)
        t_compile = time.perf_counter() - t0
        t_nb, out_nb = timeit(lambda: certify_pipeline(
            K.bellman_tables_nb, K.direction_forms_nb, K.tau_maximin_nb,
            params, zetas, etas, s1, s2))
        print(f"numba : {t_nb:8.3f} s   (first call incl. compile: {t_compile:.3f} s)")
        print(f"speedup: {t_np / t_nb:.2f}x")
        gap = max(abs(out_np[0] - out_nb[0]).max(),
                  abs(out_np[1] - out_nb[1]).max(),
                  abs(out_np[2] - out_nb[2]).max())
        print(f"max tau/margin gap between backends: {gap:.3e}")
    else:
        print("numba not installed; numpy path only")


if __name__ == "__main__":
    main()
