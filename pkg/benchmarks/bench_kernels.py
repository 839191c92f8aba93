"""Time the compiled and numpy flavours of each hot kernel on the same inputs.

    python benchmarks/bench_kernels.py [--slots 100000] [--grid 256] [--levels 12]

Both flavours are called directly (not through the dispatchers), so the
``D2DPOLICY_DISABLE_NUMBA`` flag does not matter here.
"""

import argparse
import time

import numpy as np

from d2dpolicy import kernels
from d2dpolicy._accel import HAVE_NUMBA


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def session_inputs(n, rng):
    h = rng.standard_exponential((n, 4))
    tx = np.where(rng.random(n) < 0.6, 0.1, 0.0)
    gains = (120.0 ** -4, 150.0 ** -4, 60.0 ** -4, 90.0 ** -4)
    return kernels._session_args(tx, h, gains, 1e-12 * 150.0 ** 4, 1e-12, 1.0, 3)


def excess_inputs(n, levels, rng):
    lv = 2.0 ** np.arange(levels)
    p = np.exp(-rng.exponential(2.0, n)[:, None] / lv)
    q = np.exp(-rng.exponential(2.0, n)[:, None] / lv)
    w = rng.random((n, n))
    return p, q, w / w.sum(), 1.0 / 0.8


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--slots", type=int, default=100_000)
    ap.add_argument("--grid", type=int, default=256)
    ap.add_argument("--levels", type=int, default=12)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    if not HAVE_NUMBA:
        print("numba not importable; only the numpy path is timed")

    cases = [
        ("d2d_session", session_inputs(args.slots, rng),
         kernels.d2d_session_numba, kernels.d2d_session_numpy),
        ("expected_excess", excess_inputs(args.grid, args.levels, rng),
         kernels.expected_excess_numba, kernels.expected_excess_numpy),
    ]
    print(f"{'kernel':<16} {'numba [ms]':>11} {'numpy [ms]':>11} {'speedup':>8}  agree")
    for name, inputs, fast, slow in cases:
        fast(*inputs)  # compile outside the timing
        t_fast, a = best_of(lambda: fast(*inputs), args.repeat)
        t_slow, b = best_of(lambda: slow(*inputs), args.repeat)
        same = np.array_equal(a, b) if name == "d2d_session" else np.isclose(a, b, rtol=1e-12)
        print(f"{name:<16} {1e3 * t_fast:11.3f} {1e3 * t_slow:11.3f} {t_slow / t_fast:8.1f}  {bool(same)}")


if __name__ == "__main__":
    main()
