"""Compare the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Prints the median time per call for each kernel and shape, and the speedup
of the compiled backend. Both backends are checked for agreement first.
"""

import argparse
import statistics
import timeit

import numpy as np

from mtlshare.autodiff import _kernels_py

try:
    from mtlshare.autodiff import _kernels as _kernels_c
except ImportError:
    _kernels_c = None

# (batch, in_ch, h, w, out_ch, k): the conv backbone's two layers at batch 8, plus a wider case
SHAPES = [
    (8, 1, 12, 12, 8, 3),
    (8, 8, 5, 5, 16, 3),
    (8, 1, 28, 28, 8, 3),
    (32, 8, 16, 16, 16, 3),
]


def _cases(mod, x, w, b, g, pool_in):
    out, idx = mod.maxpool2d_forward(pool_in, 2)
    return {
        "conv2d_forward": lambda: mod.conv2d_forward(x, w, b),
        "conv2d_backward": lambda: mod.conv2d_backward(x, w, g),
        "maxpool2d_forward": lambda: mod.maxpool2d_forward(pool_in, 2),
        "maxpool2d_backward": lambda: mod.maxpool2d_backward(out, idx, pool_in.shape[2], pool_in.shape[3]),
    }


def _median(fn, repeat):
    number = max(1, int(0.02 / max(timeit.timeit(fn, number=1), 1e-7)))
    return statistics.median(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=7)
    args = parser.parse_args()
    if _kernels_c is None:
        print("compiled extension not built; reinstall with a C compiler available")
        return
    rng = np.random.default_rng(0)
    print(f"{'kernel':20s} {'shape (n,c,h,w)->o,k':24s} {'numpy':>10s} {'compiled':>10s} {'speedup':>8s}")
    for n, c, h, wd, o, k in SHAPES:
        x = rng.standard_normal((n, c, h, wd))
        w = rng.standard_normal((o, c, k, k))
        b = rng.standard_normal(o)
        g = rng.standard_normal((n, o, h - k + 1, wd - k + 1))
        pool_in = rng.standard_normal((n, o, (h - k + 1) // 2 * 2, (wd - k + 1) // 2 * 2))
        np.testing.assert_allclose(_kernels_c.conv2d_forward(x, w, b), _kernels_py.conv2d_forward(x, w, b), atol=1e-10)
        py, cy = _cases(_kernels_py, x, w, b, g, pool_in), _cases(_kernels_c, x, w, b, g, pool_in)
        for name in py:
            tp, tc = _median(py[name], args.repeat), _median(cy[name], args.repeat)
            shape = f"({n},{c},{h},{wd})->{o},{k}"
            print(f"{name:20s} {shape:24s} {tp * 1e6:9.1f}us {tc * 1e6:9.1f}us {tp / tc:7.2f}x")


if __name__ == "__main__":
    main()
