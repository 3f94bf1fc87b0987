"""Compare the compiled correlator kernel with the numpy fallback.

    python3 benchmarks/bench_correlate.py [--tags N] [--rate-hz R] [--repeat K]
"""

import argparse
import time

import numpy as np

from spdcsim import _core
from spdcsim._core import _fallback


def synthetic_tags(n, rate_hz, seed=0):
    rng = np.random.default_rng(seed)
    gaps = rng.exponential(1e15 / rate_hz, size=n)
    t = np.cumsum(gaps).astype(np.int64)
    ch = rng.integers(1, 3, size=n)
    return t[ch == 1], t[ch == 2]


def best_time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--tags", type=int, default=2_000_000)
    ap.add_argument("--rate-hz", type=float, default=1e6, help="total tag rate")
    ap.add_argument("--span-fs", type=int, default=500_000)
    ap.add_argument("--bin-fs", type=int, default=2_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    t1, t2 = synthetic_tags(args.tags, args.rate_hz)
    nb = 2 * args.span_fs // args.bin_fs
    results = {}
    backends = {"python": _fallback.correlate_into}
    if _core.BACKEND == "cython":
        backends["cython"] = _core.correlate_into
    for name, fn in backends.items():
        hist = np.zeros(nb, np.int64)
        secs = best_time(lambda: (hist.fill(0), fn(t1, t2, args.span_fs, args.bin_fs, hist)), args.repeat)
        results[name] = (secs, hist.copy())
        print(f"{name:>7}: {secs * 1e3:9.2f} ms  {args.tags / secs / 1e6:8.2f} Mtags/s  "
              f"({int(hist.sum())} delays)")
    if len(results) == 2:
        (tp, hp), (tc, hc) = results["python"], results["cython"]
        assert np.array_equal(hp, hc), "backends disagree"
        print(f"speed-up: {tp / tc:.1f}x, histograms identical")
    else:
        print("compiled kernel not available; only the fallback was timed")


if __name__ == "__main__":
    main()
