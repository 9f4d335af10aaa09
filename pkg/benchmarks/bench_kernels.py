"""Time the compiled kernels against their pure-Python twins.

    python benchmarks/bench_kernels.py [--events N] [--repeat R]

Inputs are a synthetic single-device stream with Poisson arrivals over a
handful of templates, the shape the causality engine feeds the kernels.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from logprophet import _kernels_py, kernels


def make_stream(n: int, n_templates: int, rate: float, seed: int = 0):
    rng = np.random.default_rng(seed)
    t = np.cumsum(rng.exponential(1 / rate, n))
    tid = rng.integers(0, n_templates, n)
    rank = np.arange(n)
    return tid, t, rank


def main(argv: list[str] | None = None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--events", type=int, nargs="+", default=[1_000, 10_000, 100_000])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--templates", type=int, default=20)
    ap.add_argument("--rate", type=float, default=0.5, help="events per second")
    args = ap.parse_args(argv)

    try:
        from logprophet import _kernels as compiled
    except ImportError:
        compiled = None
        print("compiled kernels not built; timing the Python fallback only")

    print(f"{'kernel':<13}{'events':>9}{'python s':>11}{'cython s':>11}{'speedup':>9}")
    for n in args.events:
        tid, t, rank = make_stream(n, args.templates, args.rate)
        cases = {
            "follow_pairs": lambda impl: kernels.follow_pairs(tid, t, rank, tid, t, rank, 5.0, args.templates, True, impl=impl),
            "hit_mask": lambda impl: kernels.hit_mask(t, rank, t, rank, 5.0, True, impl=impl),
        }
        for name, fn in cases.items():
            py = min(timeit.repeat(lambda: fn(_kernels_py), number=1, repeat=args.repeat))
            if compiled is None:
                print(f"{name:<13}{n:>9}{py:>11.4f}{'-':>11}{'-':>9}")
                continue
            assert np.array_equal(fn(_kernels_py), fn(compiled))
            cy = min(timeit.repeat(lambda: fn(compiled), number=1, repeat=args.repeat))
            print(f"{name:<13}{n:>9}{py:>11.4f}{cy:>11.4f}{py / cy:>8.1f}x")


if __name__ == "__main__":
    main()
