"""Fit a light bridge between two Gaussians and compare it with the closed-form answer.

Between Gaussians the entropic plan and its bridge drift are known exactly,
so this is the cleanest place to watch the fit converge.

    python3 demos/gaussian_bridge.py --dim 2 --eps 1.0 --iters 10000
"""

import argparse
import time

import numpy as np

from lightsbm import TrainConfig, cbw_uvp_moments, conditional_moments, drift, gaussian_eot_plan, gaussian_sb_drift, train
from lightsbm.oracle import sample_bridge_marginal


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--dim", type=int, default=2)
    ap.add_argument("--eps", type=float, default=1.0)
    ap.add_argument("--iters", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    c0, c1 = rng.uniform(0.5, 2, args.dim), rng.uniform(0.5, 2, args.dim)
    oracle = gaussian_eot_plan(np.zeros(args.dim), np.diag(c0), rng.normal(size=args.dim), np.diag(c1), args.eps)
    src, tgt = oracle.sample_source(100_000, rng), oracle.sample_target(100_000, rng)

    probes = oracle.sample_source(100, rng)
    config = TrainConfig(eps=args.eps, n_components=4, batch_size=512, learning_rate=1e-3,
                         n_iters=args.iters, init_scale=1.0, seed=args.seed)
    start = time.perf_counter()
    result = train(config, src, tgt)
    v = result.checkpoint.potential
    print(f"trained {args.iters} iterations in {time.perf_counter() - start:.1f}s, final loss {result.loss_trace[-1]:.4f}")

    # conditional plans pi(x1|x0) are Gaussian mixtures, so compare exact moments
    cbw = cbw_uvp_moments(lambda x: conditional_moments(v, x), oracle.conditional_moments, probes)
    print(f"cBW-UVP against the exact plan: {cbw.value:.3f}%")

    print("\n   t   |drift error| / |drift|")
    for t in (0.0, 0.25, 0.5, 0.75, 0.95):
        x = sample_bridge_marginal(oracle, t, 2000, rng)
        g, g_star = drift(v, x, t), gaussian_sb_drift(oracle, x, t)
        rel = np.sqrt(np.mean(np.sum((g - g_star) ** 2, 1)) / np.mean(np.sum(g_star**2, 1)))
        print(f"  {t:.2f}  {rel:.4f}")

    print("\nweights:", np.round(v.weights, 3))


if __name__ == "__main__":
    main()
