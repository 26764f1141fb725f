"""Time the numba and numpy paths of the analysis kernels side by side.

Usage: python benchmarks/bench_kernels.py [--repeat N]
Run with INTERLUDE_DISABLE_NUMBA=1 to time the numpy path alone.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from interlude import _accel
from interlude.analysis import kernels

# race_counts defaults to numpy; the numba column is the explicit opt-in loop
CASES = {
    "walk_full t=2000": lambda b: kernels.walk_full(2000, 2002, 0, 0.4311, 0.25, 0.3189, b),
    "walk_column t=20000": lambda b: kernels.walk_column(20000, 20002, 20001, 20001 - 14, 0.4311, 0.25, 0.3189, b),
    "race_counts n=1e6": lambda b: kernels.race_counts(
        1_000_000, 7, 64, 1 / 0.148, 64, 3 / 0.148, 256, 1 / 0.148, 1000, 2, 3000, 40, b
    ),
}


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = ["numpy"] + (["numba"] if _accel.HAVE_NUMBA else [])
    print(f"{'kernel':<22}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) == 2 else ""))
    for name, case in CASES.items():
        if "numba" in backends:
            case("numba")  # compile outside the timed region
        secs = [best_of(lambda: case(b), args.repeat) for b in backends]
        if len(backends) == 2:
            a, b = case("numpy"), case("numba")
            same = all(np.allclose(x, y) for x, y in zip(np.atleast_1d(a), np.atleast_1d(b))) if "walk" in name else True
            extra = f"{secs[0] / secs[1]:>11.1f}x" + ("" if same else "  MISMATCH")
        else:
            extra = ""
        print(f"{name:<22}" + "".join(f"{s * 1e3:>10.1f}ms" for s in secs) + extra)


if __name__ == "__main__":
    main()
