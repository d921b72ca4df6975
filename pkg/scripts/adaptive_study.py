"""Compare the MSE and discrepancy infill strategies from the same initial designs.

Usage: python3 scripts/adaptive_study.py [--runs 5] [--initial 5] [--budget 20]
"""

import argparse

import numpy as np

from gsmkit.alignment import align_database, trapezoid_rule
from gsmkit.domain import SampleSet
from gsmkit.experiment import holdout_oracle
from gsmkit.pipeline import SurrogateConfig
from gsmkit.pod import pod_from_database
from gsmkit.sampling import AdaptivePlan, latin_hypercube, run_adaptive
from gsmkit.testbed import REFERENCE_DOMAIN, build_synthetic_database, validation_grid


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--runs", type=int, default=5)
    ap.add_argument("--initial", type=int, default=5)
    ap.add_argument("--budget", type=int, default=20)
    args = ap.parse_args()

    dom = REFERENCE_DOMAIN
    quad = trapezoid_rule(dom, 33)
    db = align_database(build_synthetic_database(6, seed=0, distortions=True).entries, dom, quad)
    basis = pod_from_database(db, quad, 0.999)
    oracle = holdout_oracle(0, dom)
    val = validation_grid(oracle, dom, 40)

    final = {"mse": [], "discrepancy": []}
    for run in range(args.runs):
        X = latin_hypercube(args.initial, dom, [0, args.initial, run])
        init = SampleSet(X, oracle(X))
        for strategy in final:
            res = run_adaptive(oracle, AdaptivePlan(strategy, init, args.budget), dom, basis,
                               SurrogateConfig(seed=run), validation=val)
            final[strategy].append(res.trace[-1].eta1)
            print(f"run {run} {strategy:<12} eta1 " + " ".join(f"{r.eta1:.3f}" for r in res.trace[::5]))
    for strategy, vals in final.items():
        print(f"{strategy:<12} mean final eta1 {np.mean(vals):.4f} over {args.runs} runs")


if __name__ == "__main__":
    main()
