"""Compare the compiled and pure-Python kernel backends.

    python benchmarks/bench_kernels.py [--repeat 5]

Each kernel runs on the same inputs under both backends; outputs are checked
for exact equality before timings are reported.
"""

import argparse
import timeit

import numpy as np

from ilde import envs, kernels
from ilde.mdp import _cumulative
from ilde.rng import derive_rng


def rollout_inputs(n=20000):
    mdp, expert = envs.build_environment("gridworld", rows=4, cols=4, horizon=12)
    H = mdp.horizon
    rng = derive_rng(0, "bench")
    return (
        _cumulative(mdp.initial_dist),
        _cumulative(mdp.transitions),
        _cumulative(expert.probs),
        rng.random(n),
        rng.random((n, H)),
        rng.random((n, H)),
        rng.random((n, H)),
        rng.random((n, H)),
        0.1,
    )


def cases():
    rng = derive_rng(1, "bench")
    yield "sample_rollouts (20k x H=12)", "sample_rollouts", rollout_inputs()
    yield "knn_distances (N=1024, d=8, k=3)", "knn_distances", (rng.random((1024, 8)), 3)
    yield "gae (4096 x 64)", "gae", (rng.random((4096, 64)), rng.random((4096, 65)), 0.99, 0.95)


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if kernels.compiled_backend is None:
        print("compiled backend not built; only the python fallback is available")
    print(f"{'kernel':36s} {'python ms':>10s} {'compiled ms':>12s} {'speedup':>8s}  equal")
    for label, name, inputs in cases():
        py = getattr(kernels.python_backend, name)
        t_py = min(timeit.repeat(lambda: py(*inputs), number=1, repeat=args.repeat)) * 1e3
        if kernels.compiled_backend is None:
            print(f"{label:36s} {t_py:10.2f} {'-':>12s} {'-':>8s}  -")
            continue
        cc = getattr(kernels.compiled_backend, name)
        t_cc = min(timeit.repeat(lambda: cc(*inputs), number=1, repeat=args.repeat)) * 1e3
        print(f"{label:36s} {t_py:10.2f} {t_cc:12.2f} {t_py / t_cc:7.1f}x  {same(py(*inputs), cc(*inputs))}")


if __name__ == "__main__":
    main()
