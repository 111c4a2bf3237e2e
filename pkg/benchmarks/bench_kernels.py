"""Time the numba-jitted kernels against their pure-numpy twins.

Run:  python3 benchmarks/bench_kernels.py [--repeat 5]

With PARASCOPE_NUMBA=0 the jitted column degrades to the numpy twin and the
table says so; otherwise the first call of each jitted kernel is excluded
from timing (compilation).
"""

import argparse
import time

import numpy as np

from parascope import kernels


def _time(fn, args, repeat):
    fn(*args)  # warm-up / JIT compile
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    d, n_centers, batch = 2, 100, 1000
    z = rng.standard_normal((batch, d))
    centers = rng.standard_normal((n_centers, d))
    fims = np.empty((n_centers, d, d))
    for i in range(n_centers):
        a = rng.standard_normal((d, d))
        fims[i] = a @ a.T + np.eye(d)
    x = rng.standard_normal((2048, d))
    y = rng.standard_normal((2048, d))

    cases = [
        (
            "kde_log_density_grad (B=1000, N=100)",
            kernels.kde_log_density_grad,
            kernels.kde_log_density_grad_numpy,
            (z, centers, fims, 0.5, 0.5),
        ),
        (
            "quadform_matrix (B=1000, N=100)",
            kernels.quadform_matrix,
            kernels.quadform_matrix_numpy,
            (z, centers, fims),
        ),
        (
            "gaussian_kernel_mean (2048 x 2048)",
            kernels.gaussian_kernel_mean,
            kernels.gaussian_kernel_mean_numpy,
            (x, y, 0.25),
        ),
    ]

    print(f"active backend: {kernels.backend_name()}")
    print(f"{'kernel':<38} {'active':>10} {'numpy':>10} {'speedup':>8}")
    for name, active, plain, call_args in cases:
        t_active = _time(active, call_args, args.repeat)
        t_plain = _time(plain, call_args, args.repeat)
        ratio = t_plain / t_active if t_active > 0 else float("inf")
        print(f"{name:<38} {t_active * 1e3:>8.2f}ms {t_plain * 1e3:>8.2f}ms {ratio:>7.1f}x")


if __name__ == "__main__":
    main()
