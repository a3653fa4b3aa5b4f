"""Command line entry point: ``randpush {validate,constants,run,fit}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import harness
from .errors import RandPushError
from .graphs import load_ensemble, validate_ensemble, ensemble_from_dict
from .weights import bound_constants


def _load_ensemble_arg(args):
    if args.ensemble:
        return args.ensemble, None
    if args.config:
        cfg = harness.ExperimentConfig.from_file(args.config)
        return cfg.ensemble, cfg
    raise RandPushError("pass --ensemble or --config")


def cmd_validate(args) -> int:
    path, cfg = _load_ensemble_arg(args)
    with open(path) as fh:
        data = json.load(fh)
    report = validate_ensemble(ensemble_from_dict(data, validate=False)).to_dict()
    out = {"ensemble": str(path), **report}
    if cfg is not None:
        problems = cfg.problems()
        out["config_problems"] = problems
        out["ok"] = out["ok"] and not problems
    print(json.dumps(out, indent=2))
    return 0 if out["ok"] else 1


def cmd_constants(args) -> int:
    path, _ = _load_ensemble_arg(args)
    print(json.dumps(bound_constants(load_ensemble(path)).to_dict(), indent=2))
    return 0


def cmd_run(args) -> int:
    cfg = harness.ExperimentConfig.from_file(args.config)
    cfg = harness.with_overrides(
        cfg, out=args.out, trials=args.trials, horizon=args.horizon, gamma=args.gamma,
        seed=args.seed, algo=args.algo, workers=args.workers,
    )
    result = harness.run_experiment(cfg)
    formats = tuple(args.format) if args.format else ("csv", "json")
    paths = harness.emit(result, cfg.out, formats)
    print(json.dumps({"written": [str(p) for p in paths]}))
    return 0


def cmd_fit(args) -> int:
    rows = harness.read_metrics_csv(args.csv)
    rows = [r for r in rows if str(r.trial) == args.trial]
    fit = harness.fit_rate([r.t for r in rows], [getattr(r, args.column) for r in rows],
                           args.window)
    print(json.dumps(fit.to_dict(), indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="randpush", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    for name, fn, help_ in (
        ("validate", cmd_validate, "check an ensemble (and config) against its invariants"),
        ("constants", cmd_constants, "print the closed-form bound constants of an ensemble"),
    ):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--ensemble")
        sp.add_argument("--config")
        sp.set_defaults(func=fn)

    sp = sub.add_parser("run", help="run a Monte Carlo experiment")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out")
    sp.add_argument("--trials", type=int)
    sp.add_argument("--horizon", type=int)
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--algo", choices=harness.ALGORITHMS)
    sp.add_argument("--workers", type=int)
    sp.add_argument("--format", choices=("csv", "json"), action="append")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("fit", help="log-log rate fit on an existing metrics CSV")
    sp.add_argument("csv")
    sp.add_argument("--column", default="gap_mean",
                    choices=("gap_mean", "gap_max", "consensus_error"))
    sp.add_argument("--trial", default="mean")
    sp.add_argument("--window", type=float, nargs=2, metavar=("TMIN", "TMAX"))
    sp.set_defaults(func=cmd_fit)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (RandPushError, OSError, ValueError, KeyError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
