"""SSD reduction and POD rank with and without alignment, over database seeds.

Usage: python3 scripts/alignment_rank.py [--m 4] [--seeds 10]
"""

import argparse

from gsmkit.alignment import AlignedDatabase, align_database, ssd_objective, trapezoid_rule
from gsmkit.pod import pod_from_database
from gsmkit.testbed import REFERENCE_DOMAIN, build_synthetic_database


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--m", type=int, default=4)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--threshold", type=float, default=0.999)
    args = ap.parse_args()

    dom = REFERENCE_DOMAIN
    quad = trapezoid_rule(dom, 33)
    print(f"{'seed':>4}{'ssd before':>12}{'ssd after':>12}{'ratio':>8}{'rank raw':>10}{'rank aligned':>14}")
    for seed in range(args.seeds):
        entries = build_synthetic_database(args.m, seed=seed, distortions=True).entries
        raw = AlignedDatabase(entries, dom)
        al = align_database(entries, dom, quad)
        pre, post = ssd_objective(raw, quad, 0.0), ssd_objective(al, quad, 0.0)
        r0 = pod_from_database(raw, quad, args.threshold).rank
        r1 = pod_from_database(al, quad, args.threshold).rank
        print(f"{seed:>4}{pre:>12.4g}{post:>12.4g}{post / pre:>8.3f}{r0:>10}{r1:>14}")


if __name__ == "__main__":
    main()
