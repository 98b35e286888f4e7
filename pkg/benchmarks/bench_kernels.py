"""Time the compiled kernels against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--tokens N] [--repeat R] [--pipeline]
"""

import argparse
import time

import numpy as np

from taskbal import kernels
from taskbal.bench import RunPlan, default_suite, run_full_pipeline


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def kernel_cases(n_tokens, seed=0):
    rng = np.random.default_rng(seed)
    n_tasks, max_c, h = 4, 6, 8
    task = rng.integers(0, n_tasks, n_tokens).astype(np.intp)
    classes = rng.integers(2, max_c + 1, n_tokens).astype(np.intp)
    y = (rng.random(n_tokens) * classes).astype(np.intp)
    f = rng.standard_normal((n_tokens, h))
    heads = rng.standard_normal((n_tasks, max_c, h))
    z = rng.standard_normal((n_tokens, max_c))
    coef = rng.random(n_tokens)
    seg = np.sort(rng.integers(0, 64, n_tokens)).astype(np.intp)
    return {
        "segment_sums": lambda m: m.segment_sums(coef, seg, 64),
        "head_forward": lambda m: m.head_forward(f, task, heads),
        "softmax_xent": lambda m: m.softmax_xent(z, classes, y, coef),
        "head_backward": lambda m: m.head_backward(f, task, heads, z),
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--tokens", type=int, default=4096)
    p.add_argument("--repeat", type=int, default=50)
    p.add_argument("--pipeline", action="store_true", help="also time the default end-to-end pipeline")
    args = p.parse_args(argv)

    backends = ["python"]
    try:
        kernels.backend_module("cython")
        backends.append("cython")
    except ImportError:
        print("compiled extension not built; timing the fallback only")

    print(f"{'kernel':<14}" + "".join(f"{b + ' (us)':>16}" for b in backends) + f"{'speedup':>10}")
    for name, call in kernel_cases(args.tokens).items():
        times = [best_of(lambda: call(kernels.backend_module(b)), args.repeat) for b in backends]
        row = f"{name:<14}" + "".join(f"{1e6 * t:>16.1f}" for t in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:>9.1f}x"
        print(row)

    if args.pipeline:
        for b in backends:
            previous = kernels.set_backend(b)
            try:
                t = best_of(lambda: run_full_pipeline(default_suite(), RunPlan()), 1)
            finally:
                kernels.set_backend(previous)
            print(f"pipeline [{b}] {t:.2f} s")


if __name__ == "__main__":
    main()
