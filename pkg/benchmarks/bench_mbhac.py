"""Time the compiled and numpy merge-tree kernels on the same inputs.

    python benchmarks/bench_mbhac.py --sizes 100 200 500 1000 --dims 3 6 --repeat 3

Each row reports the best-of-repeat wall time per backend, the speed-up, and
whether the two trees are bit-identical.
"""

import argparse
import time

import numpy as np

from mbclust import mbhac
from mbclust.mbhac import mbhac_tree


def best_time(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def same_tree(a, b):
    return all(np.array_equal(getattr(a, f), getattr(b, f)) for f in ("left", "right", "criterion", "tier"))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[100, 200, 500, 1000])
    ap.add_argument("--dims", type=int, nargs="+", default=[3, 6])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if mbhac.BACKEND != "compiled":
        raise SystemExit("compiled kernel not available; build with `pip install -e . --no-build-isolation`")
    rng = np.random.default_rng(args.seed)
    print(f"{'n':>6} {'p':>3} {'compiled s':>11} {'python s':>10} {'speed-up':>9}  identical")
    for n in args.sizes:
        for p in args.dims:
            z = np.round(rng.normal(size=(n, p)) * 10, 1)
            tc, a = best_time(lambda: mbhac_tree(z, backend="compiled"), args.repeat)
            tp, b = best_time(lambda: mbhac_tree(z, backend="python"), args.repeat)
            print(f"{n:>6} {p:>3} {tc:>11.4f} {tp:>10.4f} {tp / tc:>8.1f}x  {same_tree(a, b)}")


if __name__ == "__main__":
    main()
