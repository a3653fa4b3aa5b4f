"""Experiment configuration, Monte Carlo trials, rate fitting and output files."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .consensus import PerturbationSchedule, run_mpp
from .errors import ConfigError, FitError
from .graphs import GraphEnsemble, load_ensemble, validate_ensemble
from .optimize import ObjectiveFamily, geometric_checkpoints, run_msp
from .weights import RateBoundInputs, bound_constants, theorem2_log_bound

ALGORITHMS = ("pushsum", "mpp", "sp", "msp")
CSV_HEADER = ["trial", "t", "graph_id", "gap_max", "gap_mean", "consensus_error",
              "min_y", "bound", "ratio"]


@dataclass
class ExperimentConfig:
    ensemble: Union[str, GraphEnsemble]
    n: int
    d: int = 1
    gamma: float = 0.6
    horizon: int = 1000
    trials: int = 1
    seed: int = 0
    algo: str = "msp"
    objective: Optional[dict] = None
    x0: Union[str, list, dict] = "anchors"
    checkpoints: list = field(default_factory=list)
    fit_window: Optional[list] = None
    perturbation_U: float = 1.0
    out: str = "out"
    workers: int = 1

    @classmethod
    def from_dict(cls, data: dict, base_dir=None) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        try:
            cfg = cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        if base_dir is not None and isinstance(cfg.ensemble, str):
            path = Path(cfg.ensemble)
            if not path.is_absolute():
                cfg.ensemble = str(Path(base_dir) / path)
        return cfg

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        return cls.from_dict(data, base_dir=path.parent)

    def problems(self) -> list:
        out = []
        if not isinstance(self.horizon, int) or self.horizon < 1:
            out.append(f"horizon must be an integer >= 1, got {self.horizon!r}")
        if not isinstance(self.trials, int) or self.trials < 1:
            out.append(f"trials must be an integer >= 1, got {self.trials!r}")
        if not (isinstance(self.gamma, (int, float)) and 0.5 < self.gamma < 1):
            out.append(f"gamma must lie in (0.5, 1), got {self.gamma!r}")
        if self.algo not in ALGORITHMS:
            out.append(f"algo must be one of {ALGORITHMS}, got {self.algo!r}")
        if self.algo in ("sp", "msp") and not self.objective:
            out.append(f"algo {self.algo!r} needs an objective spec")
        if not isinstance(self.n, int) or self.n < 1:
            out.append(f"n must be a positive integer, got {self.n!r}")
        if not isinstance(self.d, int) or self.d < 1:
            out.append(f"d must be a positive integer, got {self.d!r}")
        if self.workers < 1:
            out.append("workers must be >= 1")
        return out

    def validate(self) -> "ExperimentConfig":
        problems = self.problems()
        if problems:
            raise ConfigError("; ".join(problems))
        return self

    def to_dict(self) -> dict:
        data = asdict(self)
        if isinstance(self.ensemble, GraphEnsemble):
            data["ensemble"] = self.ensemble.name or "<in-memory>"
        return data


def build_family(spec: dict, n: int, d: int) -> ObjectiveFamily:
    """Objective family from ``{"type": "abs"|"huber", "anchors": ..., "kappa": ...}``.

    ``anchors`` is an explicit n x d list or ``{"random": {"low", "high", "seed"}}``.
    """
    kind = spec.get("type")
    anchors = spec.get("anchors")
    if isinstance(anchors, dict):
        r = anchors.get("random", anchors)
        rng = np.random.default_rng(r.get("seed", 0))
        anchors = rng.uniform(r.get("low", -1.0), r.get("high", 1.0), size=(n, d))
    if anchors is None:
        raise ConfigError("objective spec needs anchors")
    anchors = np.asarray(anchors, dtype=float)
    if anchors.ndim == 1:
        anchors = anchors[:, None]
    if anchors.shape != (n, d):
        raise ConfigError(f"anchors have shape {anchors.shape}, expected ({n}, {d})")
    if kind == "abs":
        return ObjectiveFamily.abs_family(anchors)
    if kind == "huber":
        if "kappa" not in spec:
            raise ConfigError("huber objective needs kappa")
        return ObjectiveFamily.huber_family(anchors, spec["kappa"])
    raise ConfigError(f"unknown objective type {kind!r}")


def initial_states(cfg: ExperimentConfig, fam: Optional[ObjectiveFamily]) -> np.ndarray:
    spec = cfg.x0
    if spec == "anchors":
        if fam is None:
            raise ConfigError("x0='anchors' needs an objective spec")
        return np.stack([m.anchor for m in fam.members])
    if spec == "zeros":
        return np.zeros((cfg.n, cfg.d))
    if isinstance(spec, dict):
        r = spec.get("random", spec)
        rng = np.random.default_rng(r.get("seed", 0))
        return rng.uniform(r.get("low", -1.0), r.get("high", 1.0), size=(cfg.n, cfg.d))
    x0 = np.asarray(spec, dtype=float)
    if x0.ndim == 1:
        x0 = x0[:, None]
    if x0.shape != (cfg.n, cfg.d):
        raise ConfigError(f"x0 has shape {x0.shape}, expected ({cfg.n}, {cfg.d})")
    return x0


@dataclass(frozen=True)
class MetricsRow:
    trial: Union[int, str]
    t: int
    graph_id: Optional[int]
    gap_max: Optional[float]
    gap_mean: Optional[float]
    consensus_error: Optional[float]
    min_y: Optional[float]
    bound: Optional[float]
    ratio: Optional[float]


def _ratio(gap: Optional[float], log_bound: Optional[float]) -> Optional[float]:
    """``gap / bound`` evaluated in log space; 0 for a vanishing gap."""
    if gap is None or log_bound is None:
        return None
    if gap <= 0:
        return 0.0
    if log_bound == -math.inf:
        return math.inf
    return math.exp(math.log(gap) - log_bound)


@dataclass
class _Resolved:
    cfg: ExperimentConfig
    ensemble: GraphEnsemble
    family: Optional[ObjectiveFamily]
    x0: np.ndarray
    checkpoints: list


def resolve(cfg: ExperimentConfig) -> _Resolved:
    cfg.validate()
    ens = cfg.ensemble if isinstance(cfg.ensemble, GraphEnsemble) else load_ensemble(cfg.ensemble)
    report = validate_ensemble(ens)
    if not report.ok:
        raise ConfigError("invalid ensemble: " + "; ".join(report.failures))
    if ens.n != cfg.n:
        raise ConfigError(f"config n={cfg.n} but ensemble n={ens.n}")
    fam = build_family(cfg.objective, cfg.n, cfg.d) if cfg.objective else None
    x0 = initial_states(cfg, fam)
    cps = geometric_checkpoints(cfg.horizon, cfg.checkpoints)
    return _Resolved(cfg, ens, fam, x0, cps)


def run_trial(res: _Resolved, trial: int) -> tuple:
    """Rows for one trial (seed = base seed + trial) and its count of y < delta rounds."""
    cfg = res.cfg
    seed = cfg.seed + trial
    rows = []
    if cfg.algo in ("sp", "msp"):
        run = run_msp(res.ensemble, res.family, res.x0, cfg.gamma, cfg.horizon, seed,
                      checkpoints=res.checkpoints, gate=cfg.algo == "msp")
        for rec in run.records:
            rows.append(MetricsRow(
                trial=trial, t=rec.t, graph_id=rec.graph_id + 1, gap_max=rec.gap_max,
                gap_mean=rec.gap_mean, consensus_error=rec.consensus_error, min_y=rec.min_y,
                bound=rec.bound, ratio=_ratio(rec.gap_max, rec.log_bound),
            ))
        return rows, run.delta_violations
    if cfg.algo == "pushsum":
        schedule = PerturbationSchedule.zero(cfg.gamma)
    else:
        schedule = PerturbationSchedule(cfg.perturbation_U, cfg.gamma)
    run = run_mpp(res.ensemble, res.x0, schedule, cfg.horizon, seed, gate=cfg.algo == "mpp")
    wanted = set(res.checkpoints)
    for r in run.rows:
        if r.t in wanted:
            rows.append(MetricsRow(trial, r.t, r.graph_id + 1, None, None,
                                   r.consensus_error, r.min_y, None, None))
    return rows, run.delta_violations


def _run_trial_job(args):
    return run_trial(*args)


def _mean(values) -> Optional[float]:
    values = [v for v in values if v is not None]
    if not values:
        return None
    return math.fsum(values) / len(values)


def aggregate(rows: Sequence[MetricsRow], log_bounds: Optional[dict] = None) -> list:
    """Mean-over-trials rows per checkpoint, independent of the input order."""
    by_t = {}
    for r in sorted(rows, key=lambda r: (r.t, r.trial)):
        by_t.setdefault(r.t, []).append(r)
    out = []
    for t, group in sorted(by_t.items()):
        gap_max = _mean(r.gap_max for r in group)
        bound = group[0].bound
        lb = (log_bounds or {}).get(t)
        if lb is None and bound is not None:
            lb = math.log(bound) if bound > 0 else -math.inf
        out.append(MetricsRow(
            trial="mean", t=t, graph_id=None, gap_max=gap_max,
            gap_mean=_mean(r.gap_mean for r in group),
            consensus_error=_mean(r.consensus_error for r in group),
            min_y=_mean(r.min_y for r in group), bound=bound, ratio=_ratio(gap_max, lb),
        ))
    return out


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r2: float
    points: int

    def to_dict(self) -> dict:
        return asdict(self)


def fit_rate(ts, gaps, window: Optional[Sequence[float]] = None) -> RateFit:
    """Least-squares line through ``(log t, log gap)`` over positive gaps in ``window``."""
    ts = np.asarray(ts, dtype=float)
    gaps = np.asarray(gaps, dtype=float)
    keep = np.isfinite(gaps) & (gaps > 0)
    if window is not None:
        lo, hi = window
        keep &= (ts >= lo) & (ts <= hi)
    if keep.sum() < 3:
        raise FitError(f"need at least 3 checkpoints with positive gap, got {int(keep.sum())}")
    lx, ly = np.log(ts[keep]), np.log(gaps[keep])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(((ly - ly.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return RateFit(float(slope), float(intercept), r2, int(keep.sum()))


def compare_bound(rows: Sequence[MetricsRow], inputs: RateBoundInputs) -> list:
    """``(t, gap_max / bound)`` per row; the bound for checkpoint t uses index t - 1."""
    out = []
    for r in rows:
        if r.gap_max is None:
            continue
        lb = theorem2_log_bound(inputs, max(r.t - 1, 0))
        if r.gap_max <= 0 and lb == -math.inf:
            out.append((r.t, 0.0))
        else:
            out.append((r.t, _ratio(r.gap_max, lb)))
    return out


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list
    mean_rows: list
    summary: dict


def _bootstrap_band(values, seed: int, reps: int = 1000) -> Optional[list]:
    values = np.asarray([v for v in values if v is not None], dtype=float)
    if values.size == 0:
        return None
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xB007]))
    idx = rng.integers(0, values.size, size=(reps, values.size))
    means = values[idx].mean(axis=1)
    return [float(np.percentile(means, 2.5)), float(np.percentile(means, 97.5))]


def run_experiment(cfg: ExperimentConfig, trial_order: Optional[Sequence[int]] = None
                   ) -> ExperimentResult:
    """Run ``cfg.trials`` independent trials and aggregate them per checkpoint.

    Results are ordered by trial index whatever order trials run in.
    """
    res = resolve(cfg)
    order = list(range(cfg.trials)) if trial_order is None else list(trial_order)
    if sorted(order) != list(range(cfg.trials)):
        raise ConfigError("trial_order must be a permutation of range(trials)")
    jobs = [(res, k) for k in order]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_trial_job, jobs))
    else:
        results = [_run_trial_job(j) for j in jobs]
    by_trial = dict(zip(order, results))

    rows, violations = [], 0
    for k in range(cfg.trials):
        trial_rows, v = by_trial[k]
        rows.extend(trial_rows)
        violations += v

    inputs = None
    log_bounds = None
    if res.family is not None and res.ensemble.n >= 2:
        inputs = RateBoundInputs.build(bound_constants(res.ensemble), res.x0,
                                       res.family.certificate.z_star,
                                       res.family.lipschitz_sum, cfg.gamma)
        log_bounds = {t: theorem2_log_bound(inputs, t - 1) for t in res.checkpoints}
    mean_rows = aggregate(rows, log_bounds)
    summary = _summary(res, mean_rows, rows, violations, inputs, log_bounds)
    return ExperimentResult(cfg, rows, mean_rows, summary)


def _summary(res, mean_rows, rows, violations, inputs, log_bounds) -> dict:
    cfg = res.cfg
    summary = {
        "config": cfg.to_dict(),
        "trials": cfg.trials,
        "checkpoints": res.checkpoints,
        "delta_violation_rounds": violations,
        "constants": bound_constants(res.ensemble).to_dict() if res.ensemble.n >= 2 else None,
    }
    if res.family is not None:
        summary["certificate"] = res.family.certificate.to_dict()
        summary["lipschitz_sum"] = res.family.lipschitz_sum
        summary["log_bound"] = {str(t): v for t, v in (log_bounds or {}).items()}
        window = cfg.fit_window or [1, cfg.horizon]
        fits = {}
        for col in ("gap_mean", "gap_max"):
            try:
                fit = fit_rate([r.t for r in mean_rows], [getattr(r, col) for r in mean_rows], window)
                fits[col] = fit.to_dict()
            except FitError as exc:
                fits[col] = {"error": str(exc)}
        summary["rate_fit"] = {"window": list(window), **fits}
        final_t = res.checkpoints[-1]
        finals = [r.gap_mean for r in rows if r.t == final_t]
        summary["final_gap_mean"] = _mean(finals)
        summary["final_gap_mean_bootstrap95"] = _bootstrap_band(finals, cfg.seed)
        if inputs is not None:
            ratios = [r.ratio for r in rows if r.ratio is not None]
            summary["max_ratio"] = max(ratios) if ratios else None
    return summary


# --- output ----------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    return str(v)


def rows_to_csv(rows: Sequence[MetricsRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in rows:
        writer.writerow([_fmt(getattr(r, k)) for k in CSV_HEADER])
    return buf.getvalue()


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def emit(result: ExperimentResult, out_dir, formats=("csv", "json")) -> list:
    """Write ``metrics.csv`` and/or ``summary.json`` into ``out_dir``."""
    out_dir = Path(out_dir)
    written = []
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        if "csv" in formats:
            path = out_dir / "metrics.csv"
            path.write_text(rows_to_csv(list(result.rows) + list(result.mean_rows)))
            written.append(path)
        if "json" in formats:
            path = out_dir / "summary.json"
            path.write_text(json.dumps(_json_safe(result.summary), indent=2, sort_keys=True) + "\n")
            written.append(path)
    except OSError as exc:
        raise OSError(f"cannot write results to {out_dir}: {exc}") from exc
    return written


def read_metrics_csv(path) -> list:
    def num(s, cast=float):
        return None if s == "" else cast(s)

    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER:
            raise FitError(f"{path}: unexpected header {reader.fieldnames}")
        for rec in reader:
            trial = rec["trial"]
            rows.append(MetricsRow(
                trial=trial if trial == "mean" else int(trial), t=int(rec["t"]),
                graph_id=num(rec["graph_id"], int), gap_max=num(rec["gap_max"]),
                gap_mean=num(rec["gap_mean"]), consensus_error=num(rec["consensus_error"]),
                min_y=num(rec["min_y"]), bound=num(rec["bound"]), ratio=num(rec["ratio"]),
            ))
    return rows


def with_overrides(cfg: ExperimentConfig, **overrides) -> ExperimentConfig:
    return replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
