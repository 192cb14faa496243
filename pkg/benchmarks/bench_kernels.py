"""Time the numba kernels against their numpy fallbacks.

Run with ``python benchmarks/bench_kernels.py [--repeat N] [--size N]``.
The first numba call compiles (or loads the on-disk cache) and is excluded.
"""

import argparse
import math
import timeit

import numpy as np

from epryoung.kernels import NUMBA_AVAILABLE, NUMBA_KERNELS, NUMPY_KERNELS


def cases(size, rng):
    two_pi = 2.0 * math.pi
    u1 = rng.normal(0.0, 40.0, size)
    u2 = -u1 + rng.normal(0.0, 1.0, size)
    shifts = np.linspace(0.0, two_pi, 360, endpoint=False)
    boot_x = rng.normal(size=size // 10)
    boot_idx = rng.integers(0, boot_x.size, size=(50, boot_x.size))
    axis = -12.5 * two_pi + (np.arange(1600) + 0.5) * two_pi / 64
    dens = rng.random((axis.size, axis.size))
    return {
        "kummer_series": (rng.uniform(0.0, 1.0, 2000), 0.5, 3.0, 1e-16, 500),
        "modular_fold": (u1, two_pi),
        "ptot_moments": (u1, u2, two_pi, 0.3),
        "phase_scan": (u1[: size // 10], u2[: size // 10], two_pi, shifts),
        "bootstrap_variances": (boot_x, boot_idx),
        "grid_fold_moments": (dens, axis, two_pi),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--size", type=int, default=1_000_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if not NUMBA_AVAILABLE:
        print("numba is not installed; both columns use the numpy fallback")
    rng = np.random.default_rng(args.seed)

    print(f"{'kernel':<22}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}")
    for name, call_args in cases(args.size, rng).items():
        NUMBA_KERNELS[name](*call_args)  # compile
        t_np = min(timeit.repeat(lambda: NUMPY_KERNELS[name](*call_args), number=1, repeat=args.repeat))
        t_nb = min(timeit.repeat(lambda: NUMBA_KERNELS[name](*call_args), number=1, repeat=args.repeat))
        print(f"{name:<22}{1e3 * t_np:>12.2f}{1e3 * t_nb:>12.2f}{t_np / t_nb:>10.1f}")


if __name__ == "__main__":
    main()
