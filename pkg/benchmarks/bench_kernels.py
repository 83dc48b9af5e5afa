"""Time the compiled and pure-Python kernels on identical inputs.

Run with ``python3 benchmarks/bench_kernels.py [--n 100000] [--repeat 3]``.
Each row reports the best wall time per backend and the largest absolute
difference between their outputs (samplers are expected to match exactly;
the dynamic programs differ only by summation order).
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from gchains import _backend
from gchains.kernel import Ising, a_lower_sequence, symmetric_markov


def best_of(fn, repeat: int) -> tuple[float, object]:
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def max_diff(a, b) -> float:
    if isinstance(a, tuple):
        return max(max_diff(x, y) for x, y in zip(a, b))
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(x - y), initial=0.0))


def cases(n: int):
    u = np.random.default_rng(0).random(n)
    ising = Ising(0.3, 4.0)
    w, tails = ising.weights(n), ising.logit_tails(n)
    markov = symmetric_markov(0.9)
    a = a_lower_sequence(ising, 2000)
    yield "sample_linear (Ising p=4)", lambda k: k.sample_linear(u, 0.0, w, tails)
    yield "sample_markov (stay 0.9)", lambda k: k.sample_markov(u, markov.matrix)
    yield "truncated_linear (cap 64)", lambda k: k.truncated_linear(u, 0.0, w, tails, 64, None)
    yield "rho_dp (M=2000)", lambda k: k.rho_dp(a, 2000)
    yield "gap_dp (M=1000)", lambda k: k.gap_dp(a, 1000)


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    backends = _backend.available()
    if "cython" not in backends:
        print("compiled backend not built; only the Python kernels are available")
    print(f"{'kernel':30s} {'python [s]':>11s} {'cython [s]':>11s} {'speedup':>8s} {'max |diff|':>11s}")
    for name, fn in cases(args.n):
        tp, outp = best_of(lambda: fn(backends["python"]), args.repeat)
        if "cython" in backends:
            tc, outc = best_of(lambda: fn(backends["cython"]), args.repeat)
            print(f"{name:30s} {tp:11.4f} {tc:11.4f} {tp / tc:8.1f} {max_diff(outp, outc):11.2e}")
        else:
            print(f"{name:30s} {tp:11.4f} {'-':>11s} {'-':>8s} {'-':>11s}")


if __name__ == "__main__":
    main()
