"""Time the numba kernels against their numpy counterparts.

    python3 benchmarks/bench_kernels.py [--n 2000] [--classes 10] [--dim 16] [--repeat 5]

Both paths run on identical inputs; the script also reports the largest
parameter difference after one epoch so speed is never bought with drift.
"""
import argparse
import time

import numpy as np

from silver_sieve import kernels
from silver_sieve._jit import HAS_NUMBA


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--classes", type=int, default=10)
    ap.add_argument("--dim", type=int, default=16)
    ap.add_argument("--batch-size", type=int, default=32)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not HAS_NUMBA:
        raise SystemExit("numba disabled (SILVER_SIEVE_NO_JIT set or numba missing); nothing to compare")

    rng = np.random.default_rng(0)
    n, k, d = args.n, args.classes, args.dim
    x = rng.normal(size=(n, d))
    y = rng.integers(0, k, size=n)
    a = rng.integers(0, 3, size=(n, k)).astype(np.float64)
    order = rng.permutation(n)
    w0 = rng.normal(scale=0.1, size=(k, d))
    b0 = np.zeros(k)

    print(f"N={n} K={k} d={d} batch={args.batch_size}")
    print(f"{'kernel':<22}{'numba ms':>10}{'numpy ms':>10}{'speedup':>9}{'max |diff|':>13}")
    for kind, label in ((kernels.NEG, "epoch (neg. learning)"), (kernels.CE, "epoch (cross-entropy)")):
        outs = {}
        for name, fn in (("nb", kernels.epoch_nb), ("np", kernels.epoch_np)):
            w, b = w0.copy(), b0.copy()
            fn(x, y, a, w, b, order, args.batch_size, 0.01, 1e-4, kind)  # warm-up / compile
            outs[name] = w
            outs[name + "_t"] = best_of(
                lambda: fn(x, y, a, w0.copy(), b0.copy(), order, args.batch_size, 0.01, 1e-4, kind), args.repeat
            )
        diff = float(np.max(np.abs(outs["nb"] - outs["np"])))
        t_nb, t_np = outs["nb_t"], outs["np_t"]
        print(f"{label:<22}{t_nb * 1e3:>10.2f}{t_np * 1e3:>10.2f}{t_np / t_nb:>8.1f}x{diff:>13.2e}")

    kernels.ce_losses_nb(x, y, w0, b0)
    t_nb = best_of(lambda: kernels.ce_losses_nb(x, y, w0, b0), args.repeat)
    t_np = best_of(lambda: kernels.ce_losses_np(x, y, w0, b0), args.repeat)
    diff = float(np.max(np.abs(kernels.ce_losses_nb(x, y, w0, b0) - kernels.ce_losses_np(x, y, w0, b0))))
    print(f"{'per-sample CE loss':<22}{t_nb * 1e3:>10.2f}{t_np * 1e3:>10.2f}{t_np / t_nb:>8.1f}x{diff:>13.2e}")


if __name__ == "__main__":
    main()
