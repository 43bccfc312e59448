"""Variance of the moment estimator of theta under the log-equal design.

The variance levels off at theta rho / log(1 + gamma) instead of vanishing
as the number of intervals grows.
"""

import argparse
import math

from bisample import ModelParams
from bisample.interval_analytics import log_equal_grid, theta_s_variance, theta_s_variance_limit
from bisample.montecarlo import simulate_grid


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--theta", type=float, default=2.0)
    ap.add_argument("--gamma", type=float, default=1.0)
    ap.add_argument("--replicates", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    params = ModelParams(args.theta)
    limit = theta_s_variance_limit(params, args.gamma)
    print(f"limit {limit:.5f}")
    print(f"{'p':>6} {'exact var':>10} {'MC mean':>9} {'MC var':>9}")
    for p in (1, 2, 5, 10, 50, 100, 1000):
        exact = theta_s_variance(params, args.gamma, p)
        line = f"{p:>6} {exact:>10.5f}"
        if p <= 50:
            s = simulate_grid(params, log_equal_grid(args.gamma, p), args.replicates, args.seed)["S"]
            est = s.mean(axis=1) / math.log1p(args.gamma)
            line += f" {est.mean():>9.4f} {est.var(ddof=1):>9.4f}"
        print(line)


if __name__ == "__main__":
    main()
