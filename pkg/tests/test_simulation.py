import json

import numpy as np
import pytest

from fedpdm.errors import ConfigError
from fedpdm.metrics import records_to_csv
from fedpdm.simulation import RunConfig, run


def small_config(**overrides):
    base = dict(
        algorithm="dp-fedpdm",
        dataset="synthetic",
        seed=11,
        rounds=6,
        n_clients=8,
        clients_per_round=4,
        batch_size=5,
        per_client_size=30,
        q_max=3,
        nu=1e-4,
        eval_every=2,
        synth_features=5,
        synth_test=200,
    )
    base.update(overrides)
    return RunConfig(**base)


def test_resolved_fills_dataset_defaults():
    cfg = RunConfig(dataset="synthetic").resolved()
    assert cfg.eta0 == 0.02
    assert cfg.per_client_size == 600
    assert cfg.partition_scheme == "iid"
    cfg = RunConfig(dataset="mnist", batch_size=10).resolved()
    assert cfg.eta0 == 0.04
    assert cfg.per_client_size == 600
    assert cfg.partition_scheme == "labels-per-client"
    cfg = RunConfig(dataset="adult", batch_size=10, q_max=20).resolved()
    assert cfg.eta0 == 0.01
    assert cfg.per_client_size == 325
    assert cfg.partition_scheme == "one-class"


def test_explicit_values_override_defaults():
    cfg = RunConfig(dataset="synthetic", eta0=0.5, per_client_size=50,
                    partition_scheme="one-class", batch_size=5).resolved()
    assert cfg.eta0 == 0.5
    assert cfg.per_client_size == 50
    assert cfg.partition_scheme == "one-class"


def test_run_is_bitwise_deterministic(tmp_path):
    cfg = small_config(dp=True, total_budget=2.0)
    r1 = run(cfg, tmp_path / "a")
    r2 = run(cfg, tmp_path / "b")
    assert r1.final_model.tobytes() == r2.final_model.tobytes()
    assert r1.records == r2.records
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (
        tmp_path / "b" / "metrics.csv"
    ).read_bytes()


def test_full_width_compression_matches_dense():
    dense = run(small_config(algorithm="dp-fedpdm", dp=True, total_budget=1.0))
    payload = run(small_config(algorithm="bsdp-fedpdm", dp=True, total_budget=1.0))
    assert dense.final_model.tobytes() == payload.final_model.tobytes()
    assert [r.accuracy for r in dense.records] == [r.accuracy for r in payload.records]


def test_noise_toggle_does_not_shift_sampling_streams():
    """Client picks and batch draws come from their own streams, so the first
    round's step counts match with and without perturbation."""
    quiet = run(small_config(rounds=1, eval_every=1, dp=False))
    noisy = run(small_config(rounds=1, eval_every=1, dp=True, total_budget=0.5))
    assert quiet.records[0].q_mean == noisy.records[0].q_mean
    assert quiet.records[0].uplink_bits == noisy.records[0].uplink_bits


def test_eval_cadence_includes_final_round():
    res = run(small_config(rounds=7, eval_every=3))
    assert [r.round for r in res.records] == [3, 6, 7]


def test_metrics_csv_matches_records(tmp_path):
    res = run(small_config(), tmp_path / "run")
    records_to_csv(res.records, tmp_path / "again.csv")
    assert (tmp_path / "run" / "metrics.csv").read_bytes() == (
        tmp_path / "again.csv"
    ).read_bytes()


def test_output_files(tmp_path):
    out = tmp_path / "out"
    res = run(small_config(), out)
    model = np.load(out / "model.npy")
    assert model.tobytes() == res.final_model.tobytes()
    summary = json.loads((out / "summary.json").read_text())
    assert summary == res.summary
    assert summary["config"]["eta0"] == 0.02
    assert summary["dim"] == 2 * 5


def test_communication_bill_scales_with_ratios():
    cfg = small_config(
        algorithm="bsdp-fedpdm", alpha_up=0.5, alpha_down=0.2, synth_features=10
    )
    res = run(cfg)
    dim = 2 * 10
    assert res.summary["uplink_bits"] == 32 * (dim // 2) * 4 * 6
    assert res.summary["downlink_bits"] == 32 * (dim // 5) * 4 * 6


def test_index_billing_doubles_bits():
    plain = run(small_config(algorithm="bsdp-fedpdm", alpha_up=0.5))
    billed = run(small_config(algorithm="bsdp-fedpdm", alpha_up=0.5, count_index_bits=True))
    assert billed.summary["uplink_bits"] == 2 * plain.summary["uplink_bits"]
    assert billed.summary["downlink_bits"] == 2 * plain.summary["downlink_bits"]


def test_learns_separable_synthetic_problem():
    cfg = small_config(
        rounds=30,
        n_clients=10,
        clients_per_round=10,
        per_client_size=50,
        batch_size=10,
        q_max=5,
        eval_every=30,
        gamma=0.0,
        beta=0.0,
        eta0=0.05,
    )
    res = run(cfg)
    assert res.summary["final_accuracy"] > 0.8


def test_dp_budget_met_exactly_under_full_participation():
    cfg = small_config(dp=True, total_budget=1.5, rounds=6, clients_per_round=8)
    res = run(cfg)
    assert abs(res.summary["eps_cum_max"] - 1.5) <= 1e-9
    assert res.summary["epsilon_round"] > 0
    assert res.records[-1].sigma_mean > 0


def test_dp_realized_loss_bounded_by_worst_participation():
    """Sampling 4 of 8 clients, a client participating every round carries
    sqrt(1/p) times the planning budget; nobody can exceed that."""
    cfg = small_config(dp=True, total_budget=1.5, rounds=6)
    res = run(cfg)
    assert 1.5 - 1e-9 <= res.summary["eps_cum_max"] <= 1.5 * np.sqrt(2.0) + 1e-9


def test_rejects_bad_configs():
    with pytest.raises(ConfigError):
        RunConfig(algorithm="fedavg").resolved()
    with pytest.raises(ConfigError):
        RunConfig(dataset="cifar").resolved()
    with pytest.raises(ConfigError):
        RunConfig(sparsifier="threshold").resolved()
    with pytest.raises(ConfigError):
        small_config(algorithm="dp-fedpdm", alpha_up=0.5).resolved()
    with pytest.raises(ConfigError):
        small_config(batch_size=31).resolved()
    with pytest.raises(ConfigError):
        small_config(eval_every=0).resolved()
    with pytest.raises(ConfigError):
        small_config(clients_per_round=9).resolved()
    with pytest.raises(ConfigError):
        small_config(dp=True, total_budget=-1.0).resolved()


def test_adult_defaults_with_dp_are_rejected():
    """q = q_max*b/|D_i| = 50*10/325 > 1, which the accounting cannot express."""
    with pytest.raises(ConfigError) as err:
        RunConfig(dataset="adult", dp=True).resolved()
    assert "q" in str(err.value)


def test_prebuilt_problem_overrides_dataset():
    g = np.random.default_rng(5)
    n_train, n_test, nf = 8 * 30, 100, 3
    feats = g.normal(size=(n_train + n_test, nf))
    feats[:, -1] = 1.0
    labels = g.integers(0, 2, size=n_train + n_test)
    feats[:, 0] += 3.0 * (2 * labels - 1)
    from fedpdm.workload import Dataset

    train = Dataset(feats[:n_train], labels[:n_train])
    test = Dataset(feats[n_train:], labels[n_train:])
    cfg = small_config(rounds=10, eval_every=10, gamma=0.0, beta=0.0,
                       partition_scheme="iid", synth_features=999)
    res = run(cfg, problem=(train, test, 2, nf))
    assert res.final_model.shape == (2 * nf,)
    assert res.summary["final_accuracy"] > 0.8


def test_missing_mnist_directory_raises(tmp_path):
    cfg = small_config(dataset="mnist", data_dir=str(tmp_path / "nope"),
                       batch_size=10, per_client_size=600)
    with pytest.raises(FileNotFoundError):
        run(cfg)
