"""Time the numba kernels against the pure-numpy fallback.

    python3 benchmarks/bench_kernels.py [--sizes 256 512 1024] [--repeat 3]

For each kernel and grid size prints the best-of-``repeat`` wall time of
both backends, the speed-up and the largest absolute difference between
their outputs. The first numba call (compilation) is excluded.
"""

import argparse
import time

import numpy as np
from scipy.special import gamma

from fracevo import _kernels


def _best(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases(N, n, rng):
    a = 1.5
    h = 1.0 / N
    toeplitz, start = _kernels.product_weights(a, N)
    G = rng.standard_normal((N + 1, n, n))
    phi = rng.standard_normal((N + 1, n, n))
    vec = rng.standard_normal((N + 1, 4))
    L = np.tile(-np.eye(n), (N + 1, 1, 1)) + 0.1 * rng.standard_normal((N + 1, n, n))
    f = rng.standard_normal((N + 1, n))
    m = np.arange(N + 1, dtype=float)
    pred_w = (m + 1) ** a - m**a
    x, y = np.ones(n), np.zeros(n)
    return {
        "conv_matrix": lambda be: _kernels.conv_matrix(toeplitz, start, G, phi, backend=be),
        "conv_scalar": lambda be: _kernels.conv_scalar(toeplitz, start, vec, backend=be),
        "adams_pece": lambda be: _kernels.adams_pece(
            a, h, L, f, x, y, pred_w, toeplitz, start,
            h**a / gamma(a + 1), h**a / gamma(a + 2), backend=be),
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[256, 512, 1024, 2048])
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)
    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<12} {'N':>6} {'numpy [s]':>11} {'numba [s]':>11} {'speed-up':>9} {'max |diff|':>11}")
    for N in args.sizes:
        for name, fn in cases(N, args.dim, rng).items():
            fn("numba")  # compile outside the timing
            t_np, out_np = _best(lambda: fn("numpy"), args.repeat)
            t_nb, out_nb = _best(lambda: fn("numba"), args.repeat)
            diff = float(np.max(np.abs(out_np - out_nb)))
            print(f"{name:<12} {N:>6} {t_np:>11.4f} {t_nb:>11.4f} {t_np / t_nb:>9.1f} {diff:>11.2e}")


if __name__ == "__main__":
    main()
