"""Time the numba and numpy implementations of every hot kernel.

Run:  python3 benchmarks/benchmark_kernels.py [--batch 128 2000 65536]

The package selects its kernel path once at import from the
SOCGRAD_USE_NUMBA env flag; this script imports both implementations
directly so one process can compare them. Numbers from the sandbox runs
motivated the numpy default: numpy's SIMD tanh beats numba's scalar
libm tanh on every relevant batch size here (no SVML on this stack),
while the BLAS-bound matmuls tie.
"""

import argparse
import time

import numpy as np

from socgrad import kernels


def bench(fn, *args, min_time=0.4):
    fn(*args)  # warm-up / JIT
    n, t0 = 0, time.perf_counter()
    while time.perf_counter() - t0 < min_time:
        fn(*args)
        n += 1
    return (time.perf_counter() - t0) / n


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--batch", type=int, nargs="*", default=[128, 2000, 65536])
    parser.add_argument("--hidden", type=int, default=64)
    parser.add_argument("--dim", type=int, default=2)
    args = parser.parse_args()

    if not kernels._HAVE_NUMBA:
        print("numba unavailable; only the numpy path can run")
        return

    h = args.hidden
    n = args.dim
    d_in = 1 + n
    rng = np.random.default_rng(0)
    params = rng.normal(0, 0.3, kernels.n_params(d_in, h, h, n))

    pairs = [
        ("forward", kernels._nb_forward, kernels._np_forward, "fx"),
        ("mse_loss_grad", kernels._nb_mse_loss_grad, kernels._np_mse_loss_grad, "fxy"),
        ("dir_derivs", kernels._nb_dir_derivs, kernels._np_dir_derivs, "fxd"),
        ("ism_loss_grad", kernels._nb_ism_loss_grad, kernels._np_ism_loss_grad, "fxdcs"),
    ]
    print(f"net: {d_in}-{h}-{h}-{n}   (times per call; ratio > 1 means numpy faster)")
    print(f"{'kernel':<16}{'batch':>8}{'numba':>12}{'numpy':>12}{'numba/numpy':>14}")
    for B in args.batch:
        X = rng.normal(size=(B, d_in))
        Y = rng.normal(size=(B, n))
        DIRS = np.zeros((B, n, d_in))
        DIRS[:, :, 1:] = np.eye(n)
        CV = np.ascontiguousarray(DIRS[:, :, 1:])
        SIG = np.abs(rng.normal(size=(B, n))) + 0.1
        argmap = {
            "fx": (params, X, d_in, h, h, n),
            "fxy": (params, X, Y, d_in, h, h, n),
            "fxd": (params, X, DIRS, d_in, h, h, n),
            "fxdcs": (params, X, DIRS, CV, SIG, d_in, h, h, n),
        }
        for name, nb, np_, sig in pairs:
            t_nb = bench(nb, *argmap[sig])
            t_np = bench(np_, *argmap[sig])
            print(
                f"{name:<16}{B:>8}{t_nb * 1e6:>10.1f}us{t_np * 1e6:>10.1f}us"
                f"{t_nb / t_np:>14.2f}"
            )

    # adam on a typical parameter vector
    g = rng.normal(size=params.size)
    m = np.zeros_like(params)
    v = np.zeros_like(params)
    t_nb = bench(kernels._nb_adam_update, params.copy(), g, m.copy(), v.copy(), 3, 1e-3, 0.9, 0.999, 1e-8)
    t_np = bench(kernels._np_adam_update, params.copy(), g, m.copy(), v.copy(), 3, 1e-3, 0.9, 0.999, 1e-8)
    print(f"{'adam_update':<16}{params.size:>8}{t_nb * 1e6:>10.1f}us{t_np * 1e6:>10.1f}us{t_nb / t_np:>14.2f}")


if __name__ == "__main__":
    main()
