import io
import json
import math

import numpy as np
import pytest

from mimolab.bench import (BenchRow, ScenarioConfig, format_table, generate_paths,
                           monte_carlo, rows_to_csv, rows_to_json, run_trial)
from mimolab.geometry import unit_vector


def tiny_config(**overrides):
    base = dict(n_t=16, n_r=4, m=100, n=100, n_clusters=3, paths_per_cluster=2,
                P_budgets=(1, 2), strategies=("joint", "sequential"), trials=2,
                base_seed=7)
    base.update(overrides)
    return ScenarioConfig(**base)


def test_config_validation():
    with pytest.raises(ValueError):
        tiny_config(trials=0)
    with pytest.raises(ValueError):
        tiny_config(strategies=("joint", "magic"))
    with pytest.raises(ValueError):
        tiny_config(P_budgets=())
    with pytest.raises(ValueError):
        tiny_config(n_t=15)  # not a square, no array spec
    with pytest.raises(ValueError):
        tiny_config(tx_array={"type": "upa", "nx": 2, "ny": 2})  # 4 != 16
    with pytest.raises(ValueError):
        tiny_config(base_seed=-1)
    with pytest.raises(ValueError):
        ScenarioConfig.from_json({"n_t": 16, "n_r": 4, "bogus": 1})
    with pytest.raises(ValueError):
        ScenarioConfig.from_json({"n_t": 16})


def test_config_json_round_trip():
    cfg = tiny_config()
    cfg2 = ScenarioConfig.from_json(json.loads(json.dumps(cfg.to_json())))
    assert cfg2.to_json() == cfg.to_json()


def test_generate_paths_deterministic_and_counted():
    cfg = tiny_config(n_clusters=8, paths_per_cluster=5)
    ps1 = generate_paths(cfg, 3)
    ps2 = generate_paths(cfg, 3)
    assert len(ps1) == 40
    assert ps1.to_json() == ps2.to_json()
    ps3 = generate_paths(cfg, 4)
    assert ps1.to_json() != ps3.to_json()


def test_generate_paths_gain_normalization():
    cfg = tiny_config()
    ps = generate_paths(cfg, 5)
    assert abs(sum(p.rho ** 2 for p in ps) - 1.0) < 1e-12
    assert all(p.rho > 0 for p in ps)


def test_generate_paths_zero_spread_collapses_clusters():
    cfg = tiny_config(angular_spread_deg=0.0, n_clusters=2, paths_per_cluster=3)
    ps = generate_paths(cfg, 9)
    for cluster in (ps[0:3], ps[3:6]):
        assert all(p.doa == cluster[0].doa for p in cluster)
        assert all(p.dod == cluster[0].dod for p in cluster)


def test_generate_paths_directions_valid():
    cfg = tiny_config(angular_spread_deg=40.0)  # large spread exercises folding
    ps = generate_paths(cfg, 12)
    for p in ps:
        for d in (p.doa, p.dod):
            assert -math.pi <= d.azimuth < math.pi
            assert -math.pi / 2 <= d.elevation <= math.pi / 2
            assert abs(np.linalg.norm(unit_vector(d)) - 1.0) < 1e-12


def test_run_trial_counters_and_determinism():
    cfg = tiny_config()
    t1 = run_trial(cfg, 7, "sequential", 2)
    t2 = run_trial(cfg, 7, "sequential", 2)
    assert t1.rmse == t2.rmse
    assert t1.score_evals == (100 + 100) * 2
    t3 = run_trial(cfg, 7, "joint", 2)
    assert t3.score_evals == 100 * 100 * 2


def test_run_trial_flags_ill_conditioned_truth_without_failing():
    # zero spread duplicates directions inside each cluster: singular FIM
    cfg = tiny_config(angular_spread_deg=0.0)
    t = run_trial(cfg, 1, "sequential", 1)
    assert t.true_crb.ill_conditioned
    assert math.isfinite(t.true_crb.value)


def test_monte_carlo_rows_and_reduction():
    cfg = tiny_config()
    rows = monte_carlo(cfg)
    assert len(rows) == len(cfg.P_budgets) * len(cfg.strategies)
    keys = [(r.P_budget, r.strategy) for r in rows]
    assert keys == sorted(keys)
    for row in rows:
        assert row.trials == cfg.trials
        expected = (100 * 100 if row.strategy == "joint" else 200) * row.P_budget
        assert row.mean_score_evals == expected
        assert row.crb_floor == 3 * row.P_budget / (cfg.snr_linear * cfg.n_t * cfg.n_r)
    joint = {r.P_budget: r for r in rows if r.strategy == "joint"}
    seq = {r.P_budget: r for r in rows if r.strategy == "sequential"}
    for p in cfg.P_budgets:
        ratio = joint[p].mean_score_evals / seq[p].mean_score_evals
        assert ratio == (100 * 100) / (100 + 100)


def test_monte_carlo_single_trial_reduces_to_run_trial():
    cfg = tiny_config(trials=1, P_budgets=(2,), strategies=("sequential",))
    row = monte_carlo(cfg)[0]
    trial = run_trial(cfg, cfg.base_seed, "sequential", 2)
    assert row.mean_rmse == trial.rmse
    assert row.mean_score_evals == trial.score_evals
    assert row.mean_true_crb == trial.true_crb.value


def test_monte_carlo_deterministic_across_threads():
    cfg = tiny_config()
    rows1 = monte_carlo(cfg, threads=1)
    rows2 = monte_carlo(cfg, threads=2)
    for a, b in zip(rows1, rows2):
        assert a.mean_rmse == b.mean_rmse
        assert a.mean_score_evals == b.mean_score_evals
        assert a.mean_true_crb == b.mean_true_crb


def test_monte_carlo_seed_changes_results():
    cfg1 = tiny_config(P_budgets=(1,), strategies=("sequential",))
    cfg2 = tiny_config(P_budgets=(1,), strategies=("sequential",), base_seed=99)
    r1, r2 = monte_carlo(cfg1)[0], monte_carlo(cfg2)[0]
    assert r1.mean_rmse != r2.mean_rmse


def test_rows_serialization(tmp_path):
    cfg = tiny_config(trials=1, P_budgets=(1,), strategies=("sequential",))
    rows = monte_carlo(cfg)
    buf = io.StringIO()
    rows_to_csv(rows, buf)
    lines = buf.getvalue().strip().splitlines()
    assert lines[0].startswith("strategy,P_budget,mean_rmse,mean_wall_time_s,"
                               "mean_score_evals,crb_floor")
    assert len(lines) == 2
    path = tmp_path / "rows.csv"
    rows_to_csv(rows, path)
    assert path.read_text().splitlines()[0] == lines[0]
    payload = rows_to_json(cfg, rows)
    assert payload["config"]["n_t"] == 16
    assert payload["rows"][0]["strategy"] == "sequential"


def test_format_table_layout():
    rows = [
        BenchRow("joint", 5, 0.077, 1.24, 31250000.0, 0.1, 0.2, 0, 20),
        BenchRow("sequential", 5, 0.092, 0.11, 25000.0, 0.1, 0.2, 0, 20),
        BenchRow("joint", 10, 0.031, 2.40, 62500000.0, 0.2, 0.2, 0, 20),
        BenchRow("sequential", 10, 0.039, 0.16, 50000.0, 0.2, 0.2, 0, 20),
    ]
    table = format_table(rows)
    lines = table.splitlines()
    assert "joint estimation" in lines[0]
    assert "sequential estimation" in lines[0]
    assert lines[2].startswith("     P=5")
    assert "0.0770" in lines[2] and "0.0920" in lines[2]
    assert lines[3].startswith("    P=10")
