"""Wall time of each hot kernel under the numba and numpy backends.

    python benchmarks/bench_kernels.py [--reps N] [--csv FILE]

Both backend modules are imported directly, so the ``NOMORE_DISABLE_NUMBA``
switch does not matter here. The first numba call (JIT compile) is excluded.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time

import numpy as np

from nomore._kernels import _numba as NB
from nomore._kernels import _numpy as NP


def cases(rng: np.random.Generator) -> dict:
    f = rng.standard_normal((128, 64))
    g = rng.standard_normal(f.shape)
    x3 = rng.standard_normal((128, 16, 64))
    g3 = rng.standard_normal(x3.shape)
    scale, bias = rng.standard_normal(16), rng.standard_normal(16)
    _, xhat, _, _, inv = NP.bn_train_forward(x3, scale, bias, 1e-5)
    img = rng.standard_normal((32, 16, 16, 16))
    cols, _, _ = NP.im2col(img, 3, 1, 1)
    pts = rng.standard_normal((400, 8))
    return {
        "gaussian_fill 128x64": lambda m: m.gaussian_fill(7, np.empty((128, 64))),
        "affine_noise fwd 128x64": lambda m: m.affine_noise_forward(f, 0.7, 0.1, 0.1, 7),
        "affine_noise bwd 128x64": lambda m: m.affine_noise_backward(g, f, 0.7),
        "bn train fwd 128x16x64": lambda m: m.bn_train_forward(x3, scale, bias, 1e-5),
        "bn bwd 128x16x64": lambda m: m.bn_backward(g3, xhat, inv, scale, True),
        "im2col 32x16x16x16 k3": lambda m: m.im2col(img, 3, 1, 1),
        "col2im 32x16x16x16 k3": lambda m: m.col2im(cols, img.shape, 3, 1, 1),
        "pairwise 400x8": lambda m: m.pairwise_differences(pts),
    }


def median_ms(fn, mod, reps: int) -> float:
    fn(mod)  # warm-up (and JIT compile for numba)
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn(mod)
        times.append(time.perf_counter() - t0)
    return float(np.median(times) * 1e3)


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--csv", metavar="FILE", help="also write the table as CSV")
    args = p.parse_args(argv)

    rows = []
    for name, fn in cases(np.random.default_rng(0)).items():
        nb, npy = median_ms(fn, NB, args.reps), median_ms(fn, NP, args.reps)
        rows.append((name, nb, npy, npy / nb))
    print(f"{'kernel':<26}{'numba ms':>10}{'numpy ms':>10}{'numpy/numba':>13}")
    for name, nb, npy, ratio in rows:
        print(f"{name:<26}{nb:>10.3f}{npy:>10.3f}{ratio:>13.2f}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kernel", "numba_ms", "numpy_ms", "numpy_over_numba"])
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
