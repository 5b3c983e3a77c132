"""Benchmark the compiled QP kernel against the pure-Python fallback.

Times the raw box-QP solve at several problem sizes and a full radius
search, which is the kernel's real workload (dozens of projections per
radius). Run as ``python benchmarks/bench_qp.py``.
"""

import time

import numpy as np

from robradius import _qppure, robustness_radius
from robradius._solver import BACKEND

try:
    from robradius import _qpcore
except ImportError:
    _qpcore = None


def make_instances(n, count, seed):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        A = rng.standard_normal((n, n))
        H = A @ A.T + 0.1 * np.eye(n)
        a = rng.standard_normal(n) * 2.0
        lo = np.full(n, -1.0)
        hi = np.full(n, 1.0)
        lo[0], hi[0] = -np.inf, np.inf
        out.append((H, a, lo, hi))
    return out


def time_kernel(solver, instances, repeats=3):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        for H, a, lo, hi in instances:
            solver(H, a, lo, hi)
        best = min(best, time.perf_counter() - t0)
    return best / len(instances)


def time_radius(reps=200, m=4, seed=5):
    rng = np.random.default_rng(seed)
    corr = np.full((m + 1, m + 1), 0.5)
    np.fill_diagonal(corr, 1.0)
    chol = np.linalg.cholesky(corr)
    draws = [chol @ rng.standard_normal(m + 1) for _ in range(reps)]
    t0 = time.perf_counter()
    for theta in draws:
        robustness_radius(theta, corr)
    return (time.perf_counter() - t0) / reps


def main():
    print(f"active backend: {BACKEND}")
    if _qpcore is None:
        print("compiled kernel unavailable; pure-only timings")

    count = 2000
    print(f"\nraw kernel, {count} random instances per size (best of 3):")
    print(f"{'n':>4} {'pure us':>10} {'compiled us':>12} {'speedup':>8}")
    for n in (2, 4, 8, 16):
        instances = make_instances(n, count, seed=n)
        t_pure = time_kernel(_qppure.solve_box_qp, instances) * 1e6
        if _qpcore is not None:
            t_comp = time_kernel(_qpcore.solve_box_qp, instances) * 1e6
            print(f"{n:>4} {t_pure:>10.1f} {t_comp:>12.1f} {t_pure / t_comp:>7.1f}x")
        else:
            print(f"{n:>4} {t_pure:>10.1f} {'-':>12} {'-':>8}")

    t = time_radius() * 1e3
    print(f"\nfull radius search (m=4, active backend): {t:.2f} ms/call")


if __name__ == "__main__":
    main()
