#!/usr/bin/env python3
"""Spread max/min of alpha~ / Gaussian over windows 2 n^e around the centre.

Shows how far the Gaussian description of the Ising lower-bound coefficients
extends at desk-scale n, and the largest exponent e that keeps the spread <= 3.
"""
import argparse

import numpy as np

from spinlab.lowerbound import alpha_ising_table, gaussian_ratio_check


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, nargs="+", default=[250, 500, 1000, 2000])
    ap.add_argument("--delta", type=int, default=3)
    args = ap.parse_args()
    exps = np.round(np.arange(0.30, 0.76, 0.05), 2)
    print("n," + ",".join(f"log_spread_e{e}" for e in exps) + ",largest_e_spread_le_3")
    for n in args.n:
        la = alpha_ising_table(n, args.delta)
        spreads, best = [], None
        for e in exps:
            r = gaussian_ratio_check(n, args.delta, "ising", window_exponent=float(e), tables=la)
            spreads.append(r.max_ratio - r.min_ratio)
        fine = np.arange(0.20, 0.7501, 0.005)
        for e in fine:
            r = gaussian_ratio_check(n, args.delta, "ising", window_exponent=float(e), tables=la)
            if r.spread <= 3:
                best = round(float(e), 3)
        print(f"{n}," + ",".join(f"{s:.3f}" for s in spreads) + f",{best}")


if __name__ == "__main__":
    main()
