"""LHS sweep of Kriging against hierarchical Kriging on the GSM.

Usage: python3 scripts/sweep.py [--repeats 10] [--out results]
"""

import argparse
import os

from gsmkit.alignment import align_database, trapezoid_rule
from gsmkit.experiment import aggregate, bases_for, holdout_oracle, report_json, rows_csv, run_sweep
from gsmkit.testbed import REFERENCE_DOMAIN, build_synthetic_database, validation_grid


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--m", type=int, default=6)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--repeats", type=int, default=10)
    ap.add_argument("--sizes", default="5,7,10,15,20,30,40,50")
    ap.add_argument("--out", default="results")
    args = ap.parse_args()

    dom = REFERENCE_DOMAIN
    quad = trapezoid_rule(dom, 33)
    db = align_database(build_synthetic_database(args.m, seed=args.seed, distortions=True).entries, dom, quad)
    bases = bases_for(db, 0.999, quad)
    oracle = holdout_oracle(args.seed, dom)
    val = validation_grid(oracle, dom, 40)
    sizes = tuple(int(s) for s in args.sizes.split(","))
    rows = run_sweep(oracle, dom, bases, val, sizes=sizes, repeats=args.repeats)

    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "sweep.csv"), "w") as fh:
        fh.write(rows_csv(rows))
    with open(os.path.join(args.out, "sweep.json"), "w") as fh:
        fh.write(report_json(rows))
    print(f"POD rank: aligned {bases['aligned'].rank}, unaligned {bases['unaligned'].rank}")
    print(f"{'method':<16}{'size':>6}{'ok':>5}{'mean eta1':>12}{'mean eta_inf':>14}")
    for a in aggregate(rows):
        print(f"{a['method']:<16}{a['size']:>6}{a['n_ok']:>5}{a['mean_eta1']:>12.4f}{a['mean_eta_inf']:>14.4f}")


if __name__ == "__main__":
    main()
