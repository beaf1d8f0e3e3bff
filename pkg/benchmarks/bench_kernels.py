"""Time the compiled triple-sum kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--candidates 2000] [--members 300] [--triples 10000]

Both backends receive identical inputs; the script checks that their
outputs agree before reporting timings.
"""

import argparse
import sys
import time

import numpy as np

from pdbal._backend import compiled_kernels, prepare, python_kernels
from pdbal.acquisition import draw_triples


def make_inputs(B, m, n, K, seed):
    rng = np.random.default_rng(seed)
    ti, tj, tk = draw_triples(m, n, rng)
    dv = rng.uniform(size=n)
    A = rng.dirichlet(np.ones(K), size=(B, m))
    return prepare(
        ti, tj, tk, dv, A,
        np.exp(rng.uniform(0, 1, size=(B, m))),
        rng.normal(size=(B, m)),
        rng.normal(size=(B, m, 3)) * 0.2,
        rng.normal(size=(B, m, 3)),
        rng.integers(0, K, size=(B, m)),
    )


def cases(inputs, n):
    ti, tj, tk, dv, A, W, mean, C, S, Y = inputs
    return {
        "categorical_closed": lambda k: k.categorical_closed(A, W, ti, tj, tk, dv, n),
        "gaussian_closed": lambda k: k.gaussian_closed(mean, 0.25, W, ti, tj, tk, dv, n),
        "expfam_sampled": lambda k: k.expfam_sampled(C, S, W, ti, tj, tk, dv, n),
        "categorical_sampled": lambda k: k.categorical_sampled(A, Y, W, ti, tj, tk, dv, n),
    }


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--candidates", type=int, default=2000)
    p.add_argument("--members", type=int, default=300)
    p.add_argument("--triples", type=int, default=10000)
    p.add_argument("--outcomes", type=int, default=2)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    if compiled_kernels is None:
        print("compiled extension not built; run `pip install -e . --no-build-isolation` first", file=sys.stderr)
        return 1

    inputs = make_inputs(args.candidates, args.members, args.triples, args.outcomes, args.seed)
    print(f"B={args.candidates} m={args.members} n_mc={args.triples} K={args.outcomes}, best of {args.repeats}")
    print(f"{'kernel':<22}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for name, fn in cases(inputs, args.triples).items():
        t_py, out_py = best_of(lambda: fn(python_kernels), args.repeats)
        t_cy, out_cy = best_of(lambda: fn(compiled_kernels), args.repeats)
        if not np.allclose(out_py, out_cy, rtol=1e-10, atol=0):
            print(f"{name}: backends disagree", file=sys.stderr)
            return 1
        print(f"{name:<22}{t_py * 1e3:>12.1f}{t_cy * 1e3:>12.1f}{t_py / t_cy:>9.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
