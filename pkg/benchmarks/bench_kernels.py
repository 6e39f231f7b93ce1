"""Compare the compiled kernels with the numpy fallback.

Run with ``python3 benchmarks/bench_kernels.py [--n 200000] [--repeat 5]``.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from dbar_eit import _kernels_py, kernels


def _bench(fun, args, repeat):
    fun(*args)  # warm up
    return min(timeit.repeat(lambda: fun(*args), number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    x = rng.uniform(-60, 60, args.n)
    z = rng.normal(size=args.n) + 1j * rng.normal(size=args.n)
    lam = 2.0 + 1.0j
    try:
        from dbar_eit import _kernels as compiled
    except ImportError:
        compiled = None
    print(f"active backend: {kernels.BACKEND}, n = {args.n}")
    for name, a in (("scaled_re_ei", (x,)), ("faddeev_green", (z, lam))):
        tp = _bench(getattr(_kernels_py, name), a, args.repeat)
        line = f"{name:14s} python {tp * 1e3:9.2f} ms"
        if compiled is not None:
            tc = _bench(getattr(compiled, name), a, args.repeat)
            diff = np.max(np.abs(getattr(compiled, name)(*a) - getattr(_kernels_py, name)(*a)))
            line += f"  cython {tc * 1e3:9.2f} ms  speedup {tp / tc:5.1f}x  max|diff| {diff:.1e}"
        print(line)


if __name__ == "__main__":
    main()
