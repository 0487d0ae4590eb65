"""Compare the numba loop kernels with their numpy fallbacks.

Run from the repository root::

    python3 benchmarks/bench_kernels.py            # kernel timings
    python3 benchmarks/bench_kernels.py --train     # also a short training run on each path

Kernel timings call both implementations in one process (the ``*_loop``
functions are compiled when numba is importable).  ``--train`` launches two
subprocesses, one with ``HYPALIGN_DISABLE_NUMBA=1``, so the dispatch itself is
exercised.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from hypalign import kernels
from hypalign._accel import HAVE_NUMBA
from hypalign.lorentz import expm_origin


def cases(size, seed):
    rng = np.random.default_rng(seed)
    c = 0.5
    child = expm_origin(rng.normal(size=(size, 64)), c)
    parent = expm_origin(rng.normal(size=(size, 64)), c)
    c3s = rng.uniform(0.25, 1.0, size=size)
    scores = rng.normal(size=(size, 15))
    frontier = np.array([[0, -1, -1, -1, -1, -1, -1, -1], [1, 2, -1, -1, -1, -1, -1, -1],
                         [3, 4, 5, 6, -1, -1, -1, -1], list(range(7, 15))] * 6)
    truth = rng.integers(0, 15, size=(size, frontier.shape[0]))
    return {
        "cone hinge": (lambda: kernels.cone_violation_loop(child, parent, c, 0.1),
                       lambda: kernels.cone_violation_numpy(child, parent, c, 0.1)),
        "J_c grid": (lambda: kernels.jc_grid_loop(c3s, 0.25, 1.0, 40.0),
                     lambda: kernels.jc_grid_numpy(c3s, 0.25, 1.0, 40.0)),
        "golden J_c": (lambda: kernels.golden_jc_loop(0.25, 1.0, 40.0, 0.25, 1.0, 1e-10),
                       lambda: kernels.golden_jc_numpy(0.25, 1.0, 40.0, 0.25, 1.0, 1e-10)),
        "treecut hits": (lambda: kernels.treecut_hits_loop(scores, frontier, truth),
                         lambda: kernels.treecut_hits_numpy(scores, frontier, truth)),
    }


def best_of(fn, repeat):
    number = max(1, int(0.05 / max(timeit.timeit(fn, number=1), 1e-7)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def bench_kernels(size, repeat, seed):
    print(f"numba available: {HAVE_NUMBA}; batch size {size}")
    print(f"{'kernel':<14} {'loop (s)':>12} {'numpy (s)':>12} {'speedup':>9}")
    for name, (loop_fn, np_fn) in cases(size, seed).items():
        loop_fn()  # compile outside the timing
        t_loop = best_of(loop_fn, repeat)
        t_np = best_of(np_fn, repeat)
        print(f"{name:<14} {t_loop:12.3e} {t_np:12.3e} {t_np / t_loop:8.1f}x")


TRAIN_SNIPPET = (
    "import time; from hypalign.trainer import TrainConfig, train; "
    "cfg = TrainConfig(epochs={epochs}); train(TrainConfig(epochs=1)); "
    "t = time.perf_counter(); train(cfg); print(time.perf_counter() - t)"
)


def bench_training(epochs):
    code = TRAIN_SNIPPET.format(epochs=epochs)
    for label, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, HYPALIGN_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        print(f"train {epochs} steps, {label} path: {float(out.stdout.strip()):.2f}s")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--size", type=int, default=4096)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--train", action="store_true")
    parser.add_argument("--epochs", type=int, default=50)
    args = parser.parse_args()
    bench_kernels(args.size, args.repeat, args.seed)
    if args.train:
        bench_training(args.epochs)


if __name__ == "__main__":
    main()
