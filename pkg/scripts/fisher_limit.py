"""Approach of the expected sample variance on the Fisher grid to theta log 2.

Prints the exact value along a sweep of equal sample sizes and, optionally,
a Monte Carlo check at one size.
"""

import argparse

from bisample import ModelParams, SampleSizes
from bisample.interval_analytics import fisher_asymptotics, fisher_moments
from bisample.montecarlo import fisher_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--theta", type=float, default=1.0)
    ap.add_argument("--p", type=int, default=2)
    ap.add_argument("--mc-size", type=int, default=100)
    ap.add_argument("--replicates", type=int, default=0, help="Monte Carlo replicates (0 skips the check)")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    params = ModelParams(args.theta)
    limit = fisher_asymptotics(params, [1 / args.p] * args.p)
    print(f"limit theta log 2 = {limit:.6f}")
    print(f"{'n':>8} {'E V':>10} {'rel gap':>10}")
    for k in range(1, 7):
        n = 10**k
        ev = fisher_moments(params, SampleSizes((n,) * args.p)).ev
        print(f"{n:>8} {ev:>10.6f} {(limit - ev) / limit:>10.2e}")
    if args.replicates:
        rep = fisher_experiment(params, SampleSizes((args.mc_size,) * args.p), args.replicates, args.seed)
        row = rep.row("EV")
        print(f"MC at n={args.mc_size}: exact {row.exact:.6f}, empirical {row.empirical:.6f} +- {row.stderr:.6f} (z={row.z:+.2f})")


if __name__ == "__main__":
    main()
