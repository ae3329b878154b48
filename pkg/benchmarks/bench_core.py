"""Time the compiled kernels against the numpy fallback.

Usage::

    python benchmarks/bench_core.py [--repeat 5] [--n 2000]

Each kernel runs on identical inputs under both backends; outputs are
checked for bit-identity before timing.  A final row times a full forest
fit in a subprocess per backend, selected through ``RDGLOBAL_BACKEND``.
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from rdglobal import _core_python as py

try:
    from rdglobal import _core as compiled
except ImportError:
    sys.exit("compiled extension not built; run `pip install -e . --no-build-isolation` first")


def tree_inputs(rng, n, d=2, min_leaf=5):
    X = rng.uniform(-1, 1, size=(n, d))
    y = X[:, 0] ** 2 + rng.normal(0, 0.1, n)
    build = np.sort(rng.permutation(n)[: n // 2])
    keys = rng.random((2 * (len(build) // min_leaf) + 1, d))
    return X, y, build, keys


def forest_arrays(rng, n, trees=20):
    grown = []
    for _ in range(trees):
        X, y, build, keys = tree_inputs(rng, n)
        grown.append(py.grow_tree(X, y, build, 5, 2, keys))
    cat = [np.concatenate([t[j] for t in grown]) for j in range(4)]
    offsets = np.concatenate([[0], np.cumsum([len(t[0]) for t in grown])]).astype(np.int64)
    return (*cat, offsets)


def same(a, b):
    if isinstance(a, tuple):
        return all(same(u, v) for u, v in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def cases(n):
    rng = np.random.default_rng(0)
    X, y, build, keys = tree_inputs(rng, n)
    feature, threshold, left, right, offsets = forest_arrays(rng, n)
    Xq = rng.uniform(-1, 1, size=(200, 2))
    Xw = rng.uniform(-1, 1, size=(n, 2))
    lq = py.apply_forest(Xq, feature, threshold, left, right, offsets)
    lw = py.apply_forest(Xw, feature, threshold, left, right, offsets)
    lw[rng.random(lw.shape) < 0.5] = -1
    n_nodes = np.diff(offsets)
    coords = rng.integers(0, 2, size=(100, 2**8 - 1)).astype(np.int64)
    lo, hi = np.full(2, -1.0), np.full(2, 1.0)
    return {
        "grow_tree": lambda m: m.grow_tree(X, y, build, 5, 2, keys),
        "apply_forest": lambda m: m.apply_forest(Xw, feature, threshold, left, right, offsets),
        "forest_weight_matrix": lambda m: m.forest_weight_matrix(lq, lw, n_nodes),
        "dyadic_leaves": lambda m: m.dyadic_leaves(Xw, coords, lo, hi, 8),
    }


END_TO_END = (
    "import time, numpy as np\n"
    "from rdglobal.forest_regression import fit_forest, ForestParams, llf_predict_many\n"
    "rng = np.random.default_rng(0); X = rng.uniform(-1, 1, ({n}, 2)); Y = X[:, 0] + rng.normal(0, .2, {n})\n"
    "t = time.perf_counter()\n"
    "f = fit_forest(X, Y, ForestParams(num_trees=100), seed=1); llf_predict_many(f, X[:50])\n"
    "print(time.perf_counter() - t)\n"
)


def end_to_end(n, backend):
    env = dict(os.environ, RDGLOBAL_BACKEND=backend)
    out = subprocess.run([sys.executable, "-c", END_TO_END.format(n=n)], env=env, capture_output=True, text=True)
    out.check_returncode()
    return float(out.stdout)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--n", type=int, default=2000)
    args = ap.parse_args(argv)

    print(f"{'kernel':<22} {'python ms':>10} {'compiled ms':>12} {'speedup':>8}")
    for name, run in cases(args.n).items():
        if not same(run(py), run(compiled)):
            sys.exit(f"{name}: backends disagree")
        t_py = min(timeit.repeat(lambda: run(py), number=1, repeat=args.repeat))
        t_c = min(timeit.repeat(lambda: run(compiled), number=1, repeat=args.repeat))
        print(f"{name:<22} {1e3 * t_py:>10.2f} {1e3 * t_c:>12.2f} {t_py / t_c:>7.1f}x")
    t_py = end_to_end(args.n, "python")
    t_c = end_to_end(args.n, "compiled")
    print(f"{'forest fit (100 trees)':<22} {1e3 * t_py:>10.0f} {1e3 * t_c:>12.0f} {t_py / t_c:>7.1f}x")


if __name__ == "__main__":
    main()
