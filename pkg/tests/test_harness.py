import json
import math
from pathlib import Path

import numpy as np
import pytest

from randpush.errors import ConfigError, FitError
from randpush.graphs import DiGraph, GraphEnsemble
from randpush.harness import (
    CSV_HEADER, ExperimentConfig, MetricsRow, aggregate, compare_bound, emit, fit_rate,
    read_metrics_csv, rows_to_csv, run_experiment,
)
from randpush.weights import RateBoundInputs, bound_constants, gamma_factor

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def median_config(ensemble, **kw):
    base = dict(ensemble=ensemble, n=5, d=1, gamma=0.6, horizon=200, trials=3, seed=0,
                algo="msp", objective={"type": "abs", "anchors": [0, 1, 2, 8, 9]})
    base.update(kw)
    return ExperimentConfig(**base)


def test_config_validation_collects_problems(five_node_ensemble):
    cfg = median_config(five_node_ensemble, horizon=0, trials=0, gamma=1.0, algo="nope")
    problems = cfg.problems()
    assert len(problems) == 4
    with pytest.raises(ConfigError):
        run_experiment(cfg)


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"ensemble": "x", "n": 2, "bogus": 1})


def test_config_file_resolves_ensemble_relative_to_config():
    cfg = ExperimentConfig.from_file(CONFIGS / "median5.json")
    assert Path(cfg.ensemble).is_file()


def test_deterministic_single_graph_reproducible(three_cycle):
    e = GraphEnsemble((three_cycle,), (1.0,))
    cfg = ExperimentConfig(ensemble=e, n=3, horizon=64, trials=1, algo="sp",
                           objective={"type": "abs", "anchors": [0, 3, 4]})
    a, b = run_experiment(cfg), run_experiment(cfg)
    assert rows_to_csv(a.rows + a.mean_rows) == rows_to_csv(b.rows + b.mean_rows)


def test_trial_order_does_not_change_aggregate(five_node_ensemble):
    cfg = median_config(five_node_ensemble, trials=8)
    ref = run_experiment(cfg)
    perm = run_experiment(cfg, trial_order=[5, 2, 7, 0, 1, 6, 3, 4])
    assert ref.mean_rows == perm.mean_rows
    assert ref.rows == perm.rows


def test_aggregate_invariant_to_row_permutation(five_node_ensemble):
    rows = run_experiment(median_config(five_node_ensemble, trials=4)).rows
    shuffled = [rows[i] for i in np.random.default_rng(0).permutation(len(rows))]
    assert aggregate(rows) == aggregate(shuffled)


def test_mean_gap_nonnegative_and_ratio_below_one(five_node_ensemble):
    res = run_experiment(median_config(five_node_ensemble, trials=2))
    assert all(r.gap_mean >= -1e-9 and r.gap_max >= -1e-9 for r in res.rows + res.mean_rows)
    assert all(0 <= r.ratio <= 1 for r in res.rows + res.mean_rows)
    assert all(r.bound >= 0 for r in res.rows)


def test_consensus_algorithms_report_no_gap(five_node_ensemble):
    for algo in ("pushsum", "mpp"):
        cfg = ExperimentConfig(ensemble=five_node_ensemble, n=5, horizon=100, trials=2,
                               algo=algo, x0=[3, 0, 0, 0, 1])
        res = run_experiment(cfg)
        assert all(r.gap_max is None and r.bound is None for r in res.rows)
        assert all(r.consensus_error is not None for r in res.rows)


def test_parallel_workers_match_serial(five_node_ensemble):
    cfg = median_config(five_node_ensemble, trials=3)
    serial = run_experiment(cfg)
    parallel = run_experiment(median_config(five_node_ensemble, trials=3, workers=2))
    assert serial.rows == parallel.rows and serial.mean_rows == parallel.mean_rows


# --- rate fitting -------------------------------------------------------------

def test_fit_planted_power_law():
    t = np.array([1, 2, 4, 8, 16, 100, 1000, 10_000], dtype=float)
    fit = fit_rate(t, 7.0 * t**-0.5)
    assert abs(fit.slope + 0.5) < 1e-6
    assert abs(fit.intercept - math.log(7.0)) < 1e-6
    assert fit.r2 > 1 - 1e-12


@pytest.mark.parametrize("beta", [0.1, 0.4, 1.0, 2.3])
def test_fit_recovers_any_exponent(beta):
    t = np.geomspace(10, 1e5, 12)
    assert abs(fit_rate(t, 0.3 * t**-beta).slope + beta) < 1e-6


def test_fit_constant_gap():
    t = np.array([1.0, 10.0, 100.0])
    assert abs(fit_rate(t, np.full(3, 2.0)).slope) < 1e-12


def test_fit_window_and_positive_filter():
    t = np.array([1, 10, 100, 1000, 10_000], dtype=float)
    gaps = np.array([0.0, 5.0, 1.0, math.nan, -1.0])
    with pytest.raises(FitError):
        fit_rate(t, gaps)
    fit = fit_rate(t, 3 * t**-1.0, window=(10, 1000))
    assert fit.points == 3


# --- bound comparison ---------------------------------------------------------

def test_compare_bound_degenerate_zero(two_node_ensemble):
    inputs = RateBoundInputs.build(bound_constants(two_node_ensemble), [[1.0], [1.0]], [1.0],
                                   L=0.0, gamma=0.6)
    rows = [MetricsRow(0, t, 1, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0) for t in (1, 10)]
    assert compare_bound(rows, inputs) == [(1, 0.0), (10, 0.0)]


def test_compare_bound_two_node_scale(two_node_ensemble):
    inputs = RateBoundInputs.build(bound_constants(two_node_ensemble), [[0.0], [2.0]], [1.0],
                                   L=2.0, gamma=0.6)
    rows = [MetricsRow(0, t, 1, 1.0, 1.0, 0.0, 1.0, None, None) for t in (11, 1001)]
    (_, r10), (_, r1000) = compare_bound(rows, inputs)
    assert r1000 < 1e-15
    assert math.isclose(r1000 / r10, gamma_factor(10, 0.6) / gamma_factor(1000, 0.6), rel_tol=1e-12)


# --- emission -----------------------------------------------------------------

def test_emit_header_only_csv(tmp_path):
    assert rows_to_csv([]) == ",".join(CSV_HEADER) + "\n"


def test_emit_files_and_byte_identical_rerun(tmp_path, five_node_ensemble):
    cfg = median_config(five_node_ensemble, trials=2)
    emit(run_experiment(cfg), tmp_path / "a")
    emit(run_experiment(cfg), tmp_path / "b")
    for name in ("metrics.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    consts = summary["constants"]
    assert set(consts) >= {"delta", "log_one_minus_lambda", "p", "c1", "B"}
    assert consts["B"] == 8 and consts["p"] == 0.5**8 and math.isclose(consts["delta"], 5.0**-10, rel_tol=1e-14)
    assert summary["certificate"]["z_star"] == [2.0] and summary["certificate"]["f_star"] == 16.0
    rows = read_metrics_csv(tmp_path / "a" / "metrics.csv")
    assert [r.trial for r in rows].count("mean") == len(run_experiment(cfg).mean_rows)


def test_emit_reports_path_on_failure(tmp_path, five_node_ensemble):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    res = run_experiment(median_config(five_node_ensemble, trials=1, horizon=4))
    with pytest.raises(OSError, match="file"):
        emit(res, blocker / "sub")


def test_shipped_configs_load_and_validate():
    for path in CONFIGS.glob("*.json"):
        cfg = ExperimentConfig.from_file(path)
        assert cfg.problems() == [], path
