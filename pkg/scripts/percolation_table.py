#!/usr/bin/env python3
"""Hitting-time pmf of the d-ary percolation tree next to simulated frequencies."""
import argparse

import numpy as np

from spinlab.spectral import ary_percolation_pmf, extinction_probability, sample_ary


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--d", type=int, default=2)
    ap.add_argument("--p", type=float, default=0.5)
    ap.add_argument("--runs", type=int, default=10**6)
    ap.add_argument("--lmax", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    s = sample_ary(args.d, args.p, args.runs, seed=args.seed, cap=10**4)
    print(f"# extinction probability {extinction_probability(args.d, args.p):.12g}, "
          f"censored fraction {np.mean(s < 0):.6f}")
    print("ell,pmf,frequency,z")
    for ell in range(1, args.lmax + 1):
        q = ary_percolation_pmf(args.d, args.p, ell)
        f = np.mean(s == ell)
        z = (f - q) / np.sqrt(q * (1 - q) / args.runs)
        print(f"{ell},{q:.10g},{f:.10g},{z:+.2f}")


if __name__ == "__main__":
    main()
