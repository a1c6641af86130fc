import numpy as np
import pytest

from fedfair import engine, logistic
from fedfair.errors import ConfigError


def synthetic_setup(n=80, num_clients=2, seed=0):
    train = engine.generate_synthetic(engine.SyntheticSpec(n=n, seed=seed))
    test = engine.generate_synthetic(engine.SyntheticSpec(n=n, seed=seed + 1))
    shards = engine.even_shards(train, num_clients, seed=seed)
    return train, test, shards


FAST = engine.HyperParams(rounds=3, local_epochs=5, learning_rate=0.5, num_bases=4)


# ---------------------------------------------------------------------------
# algorithm spec
# ---------------------------------------------------------------------------


def test_unknown_algorithm_rejected():
    with pytest.raises(ConfigError):
        engine.AlgorithmSpec(kind="Bogus")


def test_penalty_free_variants_force_lambda_zero():
    for kind in ("FL", "AFL", "AgnosticFair-a"):
        spec = engine.AlgorithmSpec(kind=kind, hyper=engine.HyperParams(lam=7.0))
        assert spec.hyper.lam == 0.0


def test_penalized_variants_keep_lambda():
    spec = engine.AlgorithmSpec(kind="AgnosticFair", hyper=engine.HyperParams(lam=7.0))
    assert spec.hyper.lam == 7.0


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------


def test_single_client_equals_centralized_descent():
    """With one client, federated training is exactly sequential descent."""
    train, test, _ = synthetic_setup()
    shards = engine.even_shards(train, 1, seed=0)
    spec = engine.AlgorithmSpec(kind="FL", hyper=FAST)
    result = engine.run(spec, train, test, shards)

    opt = logistic.OptimizerSpec(learning_rate=0.5, epochs=5)
    penalty = logistic.PenaltySpec.disabled(train.features.shape[1])
    w = np.zeros(train.features.shape[1])
    for _ in range(FAST.rounds):
        w = logistic.fit_local(w, shards[0], np.ones(shards[0].n), penalty, opt)
    assert np.allclose(result.w_final, w, atol=1e-8)


def test_constant_basis_fl_matches_fedavg_reference():
    train, test, shards = synthetic_setup(num_clients=3)
    spec = engine.AlgorithmSpec(kind="FL", hyper=FAST)
    result = engine.run(spec, train, test, shards)
    opt = logistic.OptimizerSpec(learning_rate=0.5, epochs=5)
    history = engine.run_fedavg_reference(shards, FAST.rounds, opt)
    assert np.allclose(result.w_final, history[-1], atol=1e-10)


def test_fedavg_reference_zero_epochs_stays_at_origin():
    _, _, shards = synthetic_setup()
    history = engine.run_fedavg_reference(
        shards, 3, logistic.OptimizerSpec(epochs=0)
    )
    for w in history:
        assert np.allclose(w, 0.0)


def test_afl_alpha_has_one_entry_per_client():
    train, test, shards = synthetic_setup(num_clients=3)
    spec = engine.AlgorithmSpec(kind="AFL", hyper=FAST)
    result = engine.run(spec, train, test, shards)
    assert result.alpha_final.shape == (3,)


def test_all_variants_run_and_report_metrics():
    train, test, shards = synthetic_setup()
    for kind in engine.ALGORITHMS:
        spec = engine.AlgorithmSpec(kind=kind, hyper=FAST)
        final = engine.run(spec, train, test, shards).final
        for key in ("train_acc", "test_acc", "train_rd", "test_rd"):
            assert 0.0 <= final[key] <= 1.0


def test_zero_rounds_reports_initial_model():
    train, test, shards = synthetic_setup()
    hyper = engine.HyperParams(rounds=0, num_bases=4)
    result = engine.run(engine.AlgorithmSpec(kind="FL", hyper=hyper), train, test, shards)
    assert result.per_round == []
    assert np.allclose(result.w_final, 0.0)


# ---------------------------------------------------------------------------
# LocalFair round selection
# ---------------------------------------------------------------------------


def row(train_acc, rds):
    return {
        "train_acc": train_acc,
        "test_acc": train_acc,
        "train_rd": 0.0,
        "test_rd": 0.0,
        "per_client_rd": rds,
    }


def test_local_fair_selects_best_fair_round():
    rounds = [
        row(0.70, [0.01, 0.02]),  # fair
        row(0.80, [0.20, 0.01]),  # unfair
        row(0.75, [0.04, 0.04]),  # fair, best fair accuracy
    ]
    assert engine._select_local_fair_round(rounds)["train_acc"] == 0.75


def test_local_fair_falls_back_to_least_unfair():
    rounds = [
        row(0.70, [0.30, 0.10]),
        row(0.90, [0.40, 0.06]),
        row(0.80, [0.08, 0.09]),  # smallest worst-client rd
    ]
    assert engine._select_local_fair_round(rounds)["train_acc"] == 0.80


# ---------------------------------------------------------------------------
# synthetic generator
# ---------------------------------------------------------------------------


def test_synthetic_deterministic():
    a = engine.generate_synthetic(engine.SyntheticSpec(seed=3))
    b = engine.generate_synthetic(engine.SyntheticSpec(seed=3))
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.labels, b.labels)


def test_synthetic_shapes_and_scaling():
    ds = engine.generate_synthetic(engine.SyntheticSpec(n=50, d=3))
    assert ds.features.shape == (50, 5)  # d + sensitive + bias
    assert ds.features[:, :3].min() >= 0.0 and ds.features[:, :3].max() <= 1.0
    assert np.all(ds.features[:, -1] == 1.0)
    assert set(ds.labels.tolist()) == {0, 1}
    assert set(ds.sensitive.tolist()) == {0, 1}


def test_synthetic_validation():
    with pytest.raises(ConfigError):
        engine.SyntheticSpec(n=2)
    with pytest.raises(ConfigError):
        engine.SyntheticSpec(sensitive_correlation=1.5)


def test_even_shards_partition():
    ds = engine.generate_synthetic(engine.SyntheticSpec(n=50))
    shards = engine.even_shards(ds, 3, seed=1)
    assert sum(s.n for s in shards) == 50
    assert max(s.n for s in shards) - min(s.n for s in shards) <= 1
    rows = np.vstack([s.features for s in shards])
    assert rows.shape == ds.features.shape


# ---------------------------------------------------------------------------
# census-like generator
# ---------------------------------------------------------------------------


def test_census_deterministic():
    a = engine.generate_census_like(engine.CensusSpec(n=200, seed=5))
    b = engine.generate_census_like(engine.CensusSpec(n=200, seed=5))
    assert a.rows == b.rows


def test_census_rows_match_schema():
    table = engine.generate_census_like(engine.CensusSpec(n=100, seed=0))
    names = {c.name for c in table.schema.columns}
    assert len(table.rows) == 100
    for r in table.rows[:5]:
        assert set(r) == names


def test_prepare_census_default_split():
    train, test, shards = engine.prepare_census(seed=0, n=600)
    assert len(shards) == 2
    assert train.n + test.n == 600
    assert sum(s.n for s in shards) == train.n
    # sensitive column must not appear among the features
    assert "gender" not in " ".join(train.feature_names)


def test_write_census_csv_roundtrip(tmp_path):
    from fedfair.data import load_csv

    table = engine.generate_census_like(engine.CensusSpec(n=50, seed=1))
    path = tmp_path / "census.csv"
    engine.write_census_csv(path, table)
    loaded = load_csv(path, engine.CENSUS_SCHEMA)
    assert len(loaded.rows) == 50
    assert loaded.rows[0]["sector"] == table.rows[0]["sector"]


# ---------------------------------------------------------------------------
# experiment grid
# ---------------------------------------------------------------------------


def test_experiment_grid_runs_and_summarizes(tmp_path):
    config = {
        "algorithms": ["FL"],
        "splits": [{"name": "shift"}],
        "repetitions": 2,
        "base_seed": 0,
        "hyper": {"rounds": 2, "local_epochs": 3, "num_bases": 4},
        "dataset": {"n": 400},
    }
    summary = engine.experiment_grid(config, output_dir=tmp_path)
    assert len(summary) == 1
    row = summary[0]
    assert row["repetitions_ok"] == 2 and row["repetitions_failed"] == 0
    assert 0.0 <= row["test_acc"] <= 1.0
    assert (tmp_path / "summary.csv").exists()
    assert (tmp_path / "summary.yaml").exists()


def test_experiment_grid_records_cell_failures(tmp_path, caplog):
    config = {
        "algorithms": ["FL"],
        "splits": [{"name": "bad", "client_assignment": "by_group", "num_clients": 3}],
        "repetitions": 1,
        "hyper": {"rounds": 1, "local_epochs": 1, "num_bases": 4},
        "dataset": {"n": 400},
    }
    summary = engine.experiment_grid(config)
    assert summary[0]["repetitions_failed"] == 1
    assert "errors" in summary[0]


def test_grid_accepts_lambda_alias():
    config = {
        "algorithms": ["FairFL"],
        "splits": [{"name": "shift"}],
        "repetitions": 1,
        "hyper": {"rounds": 1, "local_epochs": 2, "num_bases": 4, "lambda": 3.0},
        "dataset": {"n": 400},
    }
    summary = engine.experiment_grid(config)
    assert summary[0]["repetitions_ok"] == 1


# ---------------------------------------------------------------------------
# round CSV
# ---------------------------------------------------------------------------


def test_write_round_csv(tmp_path):
    train, test, shards = synthetic_setup()
    result = engine.run(engine.AlgorithmSpec(kind="FL", hyper=FAST), train, test, shards)
    path = tmp_path / "rounds.csv"
    engine.write_round_csv(path, result)
    lines = path.read_text().strip().splitlines()
    assert len(lines) == 1 + FAST.rounds
    assert lines[0].startswith("round,train_acc,test_acc")
