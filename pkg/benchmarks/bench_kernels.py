"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Kernel timings call both backends directly. The end-to-end row runs one
``gnies_fit`` in a subprocess per backend, selected with GNIES_PURE_PYTHON.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from gnies import _fallback
from gnies.graphs import _pattern
from gnies.scm import GenParams, random_scm

try:
    from gnies import _kernels
except ImportError:
    _kernels = None

FIT = """
import time
from gnies.scm import GenParams, random_scm, sample
from gnies.score import sufficient_stats
from gnies.search import gnies_fit
m, _, _ = random_scm(GenParams(p=10, n_envs=5, seed=0))
s = sufficient_stats([sample(m, e, 1000, e) for e in range(5)])
t = time.perf_counter()
gnies_fit(s)
print(time.perf_counter() - t)
"""


def meek_inputs(count=50, p=12):
    # skeletons plus v-structures of random DAGs: the closure has work to do
    out = []
    for s in range(count):
        m, _, _ = random_scm(GenParams(p=p, avg_degree=3.0, n_envs=1, seed=s))
        out.append(_pattern(m.dag))
    return out


def mle_inputs(count=50, k=3, E=5):
    rng = np.random.default_rng(0)
    out = []
    for _ in range(count):
        S = []
        for _ in range(E):
            M = rng.standard_normal((k + 1, 40))
            S.append(M @ M.T / 40)
        S = np.array(S)
        out.append((S[:, 1:, 1:], S[:, 1:, 0].copy(), S[:, 0, 0].copy(), np.full(E, 40.0)))
    return out


def bench(mod, repeat):
    graphs, probs = meek_inputs(), mle_inputs()

    def meek():
        for A in graphs:
            mod.meek_closure_inplace(A.copy())

    def mle():
        for args in probs:
            mod.alternating_mle(*args, 1e-8, 200, 1e-10)

    return {name: min(timeit.repeat(f, number=1, repeat=repeat)) / 50
            for name, f in (("meek closure (p=12)", meek), ("alternating MLE (k=3, 5 envs)", mle))}


def fit_time(pure):
    env = dict(os.environ, GNIES_PURE_PYTHON="1" if pure else "0")
    out = subprocess.run([sys.executable, "-c", FIT], env=env, capture_output=True,
                         text=True, check=True)
    return float(out.stdout)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    py = bench(_fallback, args.repeat)
    cy = bench(_kernels, args.repeat) if _kernels is not None else None
    print(f"{'kernel':32s} {'python':>12s} {'cython':>12s} {'speedup':>8s}")
    for name, t in py.items():
        if cy is None:
            print(f"{name:32s} {t * 1e6:10.1f}us {'n/a':>12s}")
        else:
            print(f"{name:32s} {t * 1e6:10.1f}us {cy[name] * 1e6:10.1f}us {t / cy[name]:7.1f}x")
    tp = fit_time(True)
    tc = fit_time(False) if _kernels is not None else float("nan")
    print(f"{'gnies_fit p=10, 5 envs, n=1000':32s} {tp:11.2f}s {tc:11.2f}s {tp / tc:7.1f}x")


if __name__ == "__main__":
    main()
