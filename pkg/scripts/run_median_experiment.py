#!/usr/bin/env python3
"""Run an optimization experiment config and print the mean-gap table and rate fit.

    python scripts/run_median_experiment.py configs/median5.json --out out/median5
"""

import argparse
import json
import math
from pathlib import Path

from randpush.harness import ExperimentConfig, emit, run_experiment, with_overrides


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config", nargs="?", default=Path(__file__).parent.parent / "configs/median5.json")
    ap.add_argument("--out", help="output directory (defaults to the config's 'out')")
    ap.add_argument("--trials", type=int)
    ap.add_argument("--workers", type=int)
    args = ap.parse_args()

    cfg = ExperimentConfig.from_file(args.config)
    overrides = {k: v for k, v in (("trials", args.trials), ("workers", args.workers)) if v}
    if overrides:
        cfg = with_overrides(cfg, **overrides)
    result = run_experiment(cfg)

    print(f"{'t':>7} {'gap_mean':>12} {'gap_max':>12} {'consensus':>11} {'log10 bound':>12}")
    log_bounds = result.summary.get("log_bound", {})
    for r in result.mean_rows:
        lb = log_bounds.get(str(r.t))
        lb10 = "" if lb is None else f"{lb / math.log(10):12.1f}"
        print(f"{r.t:7d} {r.gap_mean:12.5g} {r.gap_max:12.5g} {r.consensus_error:11.3g} {lb10}")
    print(json.dumps(result.summary["rate_fit"], indent=2))

    out = Path(args.out or cfg.out)
    for path in emit(result, out):
        print("wrote", path)


if __name__ == "__main__":
    main()
