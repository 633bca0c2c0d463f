"""Compare the compiled and pure-Python kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat N]

Times SMO on RBF Gram matrices and Lloyd iterations on blob data, checks the
two backends agree, and prints one row per problem size.
"""
import argparse
import time

import numpy as np

from lorasense import kernels
from lorasense.svm import KernelSpec, gram


def _best(fn, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def smo_problem(n, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 3))
    y = np.where(X[:, 0] + 0.5 * X[:, 1] + 0.4 * rng.normal(size=n) > 0, 1.0, -1.0)
    return gram(KernelSpec("rbf", 1 / 3), X, X), y


def lloyd_problem(n, seed=0):
    rng = np.random.default_rng(seed)
    centres = rng.uniform(-10, 10, size=(5, 3))
    X = centres[rng.integers(5, size=n)] + rng.normal(size=(n, 3))
    return X, X[rng.choice(n, 5, replace=False)].copy()


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--smo-sizes", default="100,400,1000")
    ap.add_argument("--lloyd-sizes", default="1000,10000,50000")
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    print(f"backends: {', '.join(backends)}")
    if "cython" not in backends:
        print("compiled extension not built; only the python backend is timed")

    print(f"{'kernel':8} {'n':>7} " + " ".join(f"{b + ' s':>10}" for b in backends) + f" {'speedup':>8}  agree")
    for n in map(int, args.smo_sizes.split(",")):
        K, y = smo_problem(n)
        res = {b: _best(lambda b=b: kernels.smo_solve(K, y, 1.0, 1e-3, 50, 7, backend=b), args.repeat)
               for b in backends}
        _row("smo", n, res, lambda a, b: np.allclose(a[0], b[0], atol=1e-10) and abs(a[1] - b[1]) < 1e-10)
    for n in map(int, args.lloyd_sizes.split(",")):
        X, C0 = lloyd_problem(n)
        res = {b: _best(lambda b=b: kernels.lloyd(X, C0.copy(), 300, backend=b), args.repeat)
               for b in backends}
        _row("lloyd", n, res, lambda a, b: np.array_equal(a[1], b[1]))


def _row(name, n, res, same):
    times = " ".join(f"{t:10.4f}" for t, _ in res.values())
    if len(res) == 2:
        speed = res["python"][0] / res["cython"][0]
        agree = "yes" if same(res["python"][1], res["cython"][1]) else "NO"
        print(f"{name:8} {n:7d} {times} {speed:7.1f}x  {agree}")
    else:
        print(f"{name:8} {n:7d} {times}")


if __name__ == "__main__":
    main()
