"""Timing comparison: compiled kernels vs the pure-numpy reference.

Run from the repository root:

    python3 benchmarks/bench_kernels.py

Each kernel is timed best-of-5 after a warmup call, at a few problem sizes
spanning the bundled models (the stage-1 sweep shape for the scalar grids up
to the pitot candidate batch, and the datacompat trajectory lengths).
"""

import time

import numpy as np

from sepnls import _kernels

if not _kernels.HAVE_NATIVE:
    print("note: compiled extension not available; timing the reference "
          "against itself (set-up problem or SEPNLS_PURE_PYTHON=1?)")


def best_of(fn, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def fmt(seconds):
    return f"{seconds * 1e3:9.3f} ms"


def bench_mgs():
    print("mgs_sweep: batched thin-QR least squares over candidates")
    print(f"{'C':>5} {'N':>6} {'n':>3} {'native':>12} {'reference':>12} {'speedup':>8}")
    rng = np.random.default_rng(0)
    for C, N, n in ((101, 100, 2), (500, 100, 2), (500, 3101 * 3, 5),
                    (300, 1200, 6)):
        A = rng.normal(size=(C, N, n))
        y = rng.normal(size=(C, N))
        _kernels.mgs_sweep(A, y)  # warmup
        _kernels.reference.mgs_sweep(A, y)
        t_nat = best_of(lambda: _kernels.mgs_sweep(A, y))
        t_ref = best_of(lambda: _kernels.reference.mgs_sweep(A, y))
        print(f"{C:>5} {N:>6} {n:>3} {fmt(t_nat)} {fmt(t_ref)} "
              f"{t_ref / t_nat:7.1f}x")


def bench_rk4():
    print()
    print("rk4_kinematics: six-state trajectory propagation")
    print(f"{'N':>7} {'native':>12} {'reference':>12} {'speedup':>8}")
    x0 = np.array([25.0, 0.5, 1.2, 0.02, 0.05, -0.03])
    g = 9.80665
    rng = np.random.default_rng(1)
    for N in (501, 2001, 20001):
        inputs = np.array([0.5, 0.2, -g, 0.04, 0.03, 0.02])[None, :] \
            + 0.1 * rng.normal(size=(N, 6)).cumsum(axis=0) / np.sqrt(N)
        _kernels.rk4_kinematics(x0, inputs, 0.02, g)  # warmup
        _kernels.reference.rk4_kinematics(x0, inputs, 0.02, g)
        t_nat = best_of(lambda: _kernels.rk4_kinematics(x0, inputs, 0.02, g))
        t_ref = best_of(
            lambda: _kernels.reference.rk4_kinematics(x0, inputs, 0.02, g))
        print(f"{N:>7} {fmt(t_nat)} {fmt(t_ref)} {t_ref / t_nat:7.1f}x")


if __name__ == "__main__":
    bench_mgs()
    bench_rk4()
