#!/usr/bin/env python3
"""Survey how often min_i y_i dips below the gating threshold delta.

Runs unperturbed gated push-sum on random ensembles for each n and reports
the fraction of rounds with min y < delta next to the smallest y seen,
normalised by delta and by delta / n.

    python scripts/min_y_survey.py --n 2 3 4 5 6 7 --ensembles 20 --rounds 2000
"""

import argparse
import logging

import numpy as np

from randpush.consensus import PerturbationSchedule, run_mpp
from randpush.graphs import random_ensemble


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[2, 3, 4, 5, 6, 7])
    ap.add_argument("--ensembles", type=int, default=20)
    ap.add_argument("--rounds", type=int, default=2000)
    ap.add_argument("--edge-prob", type=float, default=0.2)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    logging.getLogger("randpush").setLevel(logging.ERROR)

    print(f"{'n':>3} {'rounds < delta':>15} {'min y / delta':>14} {'min y / (delta/n)':>18}")
    for n in args.n:
        rng = np.random.default_rng([args.seed, n])
        below = total = 0
        worst = np.inf
        for k in range(args.ensembles):
            ens = random_ensemble(n, 3, args.edge_prob, rng)
            run = run_mpp(ens, np.ones(n), PerturbationSchedule.zero(), args.rounds, k, every=args.rounds)
            below += run.delta_violations
            total += args.rounds
            worst = min(worst, run.min_y / run.delta)
        print(f"{n:3d} {below / total:15.2%} {worst:14.3g} {worst * n:18.3g}")


if __name__ == "__main__":
    main()
