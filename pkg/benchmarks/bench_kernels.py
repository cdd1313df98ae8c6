"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5] [--K 50] [--T 2500]

Each kernel runs once untimed on both backends (this triggers numba
compilation) and is then timed with ``timeit``; the best of ``--repeat``
runs is reported. Outputs of the two backends are checked for agreement.
"""

import argparse
import timeit

import numpy as np

from wagerlearn import kernels


def workloads(k, horizon, seed=0):
    g = np.random.default_rng(seed)
    losses = g.random((horizon, k))
    w0 = np.full(k, 1.0 / k)
    probs = g.dirichlet(np.ones(k), size=horizon)
    cum = np.cumsum(probs, axis=1)
    lottery_t = min(horizon, 300)
    lottery_u = g.random(lottery_t * (lottery_t + 1) // 2)
    samples = 2000
    block = 32
    counts = np.zeros((samples, k), dtype=np.int64)
    block_u = g.random((block, samples))
    exact_probs = g.dirichlet(np.ones(4), size=9)
    bandit_u = g.random(horizon)
    return {
        "weight_path WSU": lambda b: b.weight_path(losses, kernels.WSU, 0.05, w0),
        "weight_path Hedge": lambda b: b.weight_path(losses, kernels.HEDGE, 0.05, w0),
        "bandit_path WSU-UX": lambda b: b.bandit_path(losses, kernels.WSU_UX, 0.002, 0.14,
                                                      bandit_u),
        f"lottery_select T={lottery_t}": lambda b: b.lottery_select(cum[:lottery_t], lottery_u),
        f"sample_block S={samples}": lambda b: b.sample_block(counts.copy(), cum[:block],
                                                              block_u),
        "exact_selection K=4 t=9": lambda b: b.exact_selection(exact_probs),
    }


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.allclose(a, b, rtol=1e-10, atol=1e-12)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--K", type=int, default=50)
    ap.add_argument("--T", type=int, default=2500)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if kernels.NUMBA is None:
        print("numba is not installed; nothing to compare")
        return 1
    print(f"K={args.K} T={args.T}, best of {args.repeat}")
    print(f"{'kernel':28s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}  agree")
    for name, fn in workloads(args.K, args.T).items():
        agree = "yes" if _same(fn(kernels.NUMPY), fn(kernels.NUMBA)) else "NO"
        times = {}
        for backend in (kernels.NUMPY, kernels.NUMBA):
            runs = timeit.repeat(lambda: fn(backend), number=1, repeat=args.repeat)
            times[backend.name] = min(runs) * 1e3
        print(f"{name:28s} {times['numpy']:10.2f} {times['numba']:10.2f} "
              f"{times['numpy'] / times['numba']:8.1f}  {agree}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
