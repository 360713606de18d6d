#!/usr/bin/env python3
"""Benchmark the compiled stencil kernels against the NumPy fallback.

Runs each kernel on representative sizes and the two fused Euler-Maruyama
steps over full mock trajectories, and prints the per-call times plus the
speedup. Usage:

    python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from meppflow import _kernels_py as kpy

try:
    from meppflow import _kernels as kc
except ImportError:
    kc = None


def timeit(fn, *args, repeat=20000):
    fn(*args)  # warm up
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - t0) / repeat


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20000)
    ap.add_argument("--n", type=int, default=64)
    args = ap.parse_args()

    if kc is None:
        print("compiled extension not built; nothing to compare")
        return

    n = args.n
    rng = np.random.default_rng(0)
    rho = 1.0 + 0.5 * np.sin(2 * np.pi * (np.arange(n) + 0.5) / n)
    p = rng.standard_normal(n)
    j = rng.standard_normal(n)
    mf = 0.5 + rng.random(n)
    db = rng.standard_normal(n)
    dx = 1.0 / n

    cases = [
        ("grad_periodic", (p, dx)),
        ("div_periodic", (j, dx)),
        ("face_arith_periodic", (rho,)),
        ("face_logmean_periodic", (rho,)),
        ("wasserstein_apply_periodic", (mf, p, dx)),
        ("em_step_wboltz_periodic", (rho, 1.0, True, True, db, 0.5, 1e-4, dx)),
        ("em_step_l2grad_periodic", (p, 1.0, db, 0.5, 1e-4, dx)),
    ]

    print(f"n = {n}, {args.repeat} calls per kernel")
    print(f"{'kernel':<28} {'numpy':>10} {'compiled':>10} {'speedup':>8}")
    for name, call_args in cases:
        t_py = timeit(getattr(kpy, name), *call_args, repeat=args.repeat)
        t_c = timeit(getattr(kc, name), *call_args, repeat=args.repeat)
        print(f"{name:<28} {t_py * 1e6:>8.2f}us {t_c * 1e6:>8.2f}us "
              f"{t_py / t_c:>7.1f}x")

    # end-to-end: one stochastic trajectory of the mass-diffusion model
    import meppflow as mfpkg
    g = mfpkg.Grid1D(n, 1.0, "periodic")
    z0 = mfpkg.Field(g, rho)
    k = mfpkg.WassersteinMetric(mobility=mfpkg.LinearMobility(1.0))
    s = mfpkg.Boltzmann()
    cfg = mfpkg.NoiseConfig(epsilon=0.25, seed=7)
    steps = 5000

    t0 = time.perf_counter()
    mfpkg.sample_path(z0, k, s, 1e-4, steps, cfg, record=False)
    t_full = (time.perf_counter() - t0) / steps
    backend = "compiled" if mfpkg.COMPILED_KERNELS else "numpy"
    print(f"\nstochastic diffusion trajectory ({backend} backend): "
          f"{t_full * 1e6:.1f}us per step")
    if mfpkg.COMPILED_KERNELS:
        print("re-run with MEPPFLOW_PURE_PYTHON=1 to time the fallback "
              "end to end")


if __name__ == "__main__":
    main()
