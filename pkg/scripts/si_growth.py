#!/usr/bin/env python3
"""Monte-Carlo s'Cov s / (2n) on critical antiferromagnetic bipartite instances.

s is +1 on the left side and -1 on the right. Writes one CSV row per
(n, seed) and prints the best-of-seeds trend.
"""
import argparse
import csv
import sys

import numpy as np

from spinlab.graphs import gen_regular_bipartite
from spinlab.models import beta_c, ising
from spinlab.samplers import estimate_covariance_quadratic


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, nargs="+", default=[64, 128, 256, 512])
    ap.add_argument("--delta", type=int, default=3)
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--sweeps", type=int, default=20000)
    ap.add_argument("--out", default="-")
    args = ap.parse_args()
    beta = -beta_c(args.delta)
    fh = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    w = csv.writer(fh)
    w.writerow(["n", "seed", "value", "stderr"])
    best = {}
    for n in args.n:
        s = np.where(np.arange(2 * n) < n, 1.0, -1.0)
        for seed in range(args.seeds):
            g = gen_regular_bipartite(n, args.delta, seed=seed, multigraph=False)
            est = estimate_covariance_quadratic(ising(g, beta), s, sweeps=args.sweeps, seed=seed)
            w.writerow([n, seed, f"{est.value:.17g}", f"{est.stderr:.17g}"])
            best[n] = max(best.get(n, -np.inf), est.value)
    if fh is not sys.stdout:
        fh.close()
    prev = None
    for n in args.n:
        ratio = "" if prev is None else f"  ratio {best[n] / prev:.3f}"
        print(f"n={n}: best {best[n]:.3f}{ratio}", file=sys.stderr)
        prev = best[n]


if __name__ == "__main__":
    main()
