"""End-to-end federated simulation of the dense and sparsified algorithms.

One run wires together: client sampling, per-client primal-dual inner loops,
optional Gaussian perturbation of uploads, optional bidirectional top-k /
rand-k compression, coverage-weighted aggregation with an l1 prox, privacy
accounting and communication metering. Every random decision draws from a
named stream keyed by (seed, purpose, client, round), so trajectories are
bit-reproducible and independent of scheduling.
"""
from __future__ import annotations

import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import client as cl
from . import rng
from .data import PartitionSpec, partition, synth_generate, load_adult, load_mnist
from .errors import ConfigError
from .metrics import CommMeter, MetricsWriter, RoundRecord, stationarity_measure, write_summary
from .privacy import (
    PrivacyAccountant,
    PrivacySpec,
    SensitivityParams,
    epsilon_for_budget,
    noise_sigma,
    sensitivity,
)
from .server import dense_global_update, downlink_payload, sample_clients, sparse_global_update
from .sparsify import SparsePayload, densify, k_for_ratio, rand_k, top_k
from .workload import Dataset, WorkloadParams, predict_accuracy

log = logging.getLogger(__name__)

ALGORITHMS = ("dp-fedpdm", "bsdp-fedpdm")
DATASETS = ("synthetic", "mnist", "adult")
SPARSIFIERS = ("top", "rand")

# Per-dataset defaults for fields left unset in RunConfig.
_DATASET_DEFAULTS = {
    "mnist": {"eta0": 0.04, "per_client_size": 600, "partition_scheme": "labels-per-client"},
    "adult": {"eta0": 0.01, "per_client_size": 325, "partition_scheme": "one-class"},
    "synthetic": {"eta0": 0.02, "per_client_size": 600, "partition_scheme": "iid"},
}


@dataclass(frozen=True)
class RunConfig:
    """Complete description of one simulation run."""

    algorithm: str = "dp-fedpdm"
    dataset: str = "synthetic"
    data_dir: str | None = None
    seed: int = 0
    rounds: int = 200
    n_clients: int = 100
    clients_per_round: int = 30
    batch_size: int = 10
    rho: float = 10.0
    eta0: float | None = None
    nu: float = 1e-2
    q_max: int = 50
    clip_bound: float = 1.0
    beta: float = 0.5
    gamma: float = 0.5
    dp: bool = False
    total_budget: float = 1.0
    delta: float = 1e-4
    c0: float = 1.0
    alpha_up: float = 1.0
    alpha_down: float = 1.0
    sparsifier: str = "top"
    count_index_bits: bool = False
    eval_every: int = 5
    partition_scheme: str | None = None
    per_client_size: int | None = None
    labels_per_client: int = 4
    synth_classes: int = 2
    synth_features: int = 10
    synth_test: int = 2000
    synth_separation: float = 3.0

    def resolved(self) -> "RunConfig":
        """Fill dataset-dependent defaults and validate the result."""
        if self.dataset not in DATASETS:
            raise ConfigError(f"unknown dataset {self.dataset!r}")
        defaults = _DATASET_DEFAULTS[self.dataset]
        cfg = replace(
            self,
            eta0=self.eta0 if self.eta0 is not None else defaults["eta0"],
            per_client_size=(
                self.per_client_size
                if self.per_client_size is not None
                else defaults["per_client_size"]
            ),
            partition_scheme=(
                self.partition_scheme
                if self.partition_scheme is not None
                else defaults["partition_scheme"]
            ),
        )
        cfg._validate()
        return cfg

    def _validate(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.sparsifier not in SPARSIFIERS:
            raise ConfigError(f"unknown sparsifier {self.sparsifier!r}")
        if self.rounds < 1:
            raise ConfigError("rounds must be at least 1")
        if not 1 <= self.clients_per_round <= self.n_clients:
            raise ConfigError("clients_per_round must lie in [1, n_clients]")
        if self.batch_size < 1 or self.batch_size > self.per_client_size:
            raise ConfigError("batch_size must lie in [1, per_client_size]")
        if self.rho <= 0 or self.eta0 <= 0:
            raise ConfigError("rho and eta0 must be positive")
        if self.nu <= 0:
            raise ConfigError("nu must be positive")
        if self.q_max < 1:
            raise ConfigError("q_max must be at least 1")
        if self.clip_bound <= 0:
            raise ConfigError("clip_bound must be positive")
        if self.beta < 0 or self.gamma < 0:
            raise ConfigError("beta and gamma must be non-negative")
        if not 0 < self.alpha_up <= 1 or not 0 < self.alpha_down <= 1:
            raise ConfigError("compression ratios must lie in (0, 1]")
        if self.algorithm == "dp-fedpdm" and (self.alpha_up != 1.0 or self.alpha_down != 1.0):
            raise ConfigError("compression ratios below 1 require algorithm bsdp-fedpdm")
        if self.eval_every < 1:
            raise ConfigError("eval_every must be at least 1")
        if self.dp:
            if self.total_budget <= 0:
                raise ConfigError("total_budget must be positive when dp is on")
            if not 0 < self.delta < 1:
                raise ConfigError("delta must lie in (0, 1)")
            if self.c0 <= 0:
                raise ConfigError("c0 must be positive")
            q = self.q_max * self.batch_size / self.per_client_size
            if q >= 1:
                raise ConfigError(
                    f"per-round data fraction q = q_max*b/|D_i| = {q:.3f} >= 1; "
                    "the accounting formula requires q < 1 (reduce q_max or "
                    "batch_size, or enlarge per_client_size)"
                )


@dataclass
class RunResult:
    config: RunConfig
    records: list[RoundRecord]
    final_model: np.ndarray
    summary: dict = field(repr=False)


def _resolve_data_dir(cfg: RunConfig) -> Path:
    if cfg.data_dir is not None:
        return Path(cfg.data_dir)
    return Path(os.environ.get("FEDPDM_DATA_DIR", "data"))


def _load_problem(cfg: RunConfig) -> tuple[Dataset, Dataset, WorkloadParams]:
    if cfg.dataset == "synthetic":
        train, test = synth_generate(
            cfg.synth_classes,
            cfg.synth_features,
            cfg.n_clients * cfg.per_client_size,
            cfg.synth_test,
            cfg.synth_separation,
            rng.stream(cfg.seed, rng.DATA_GEN),
        )
        m, n = cfg.synth_classes, cfg.synth_features
    elif cfg.dataset == "mnist":
        train, test = load_mnist(_resolve_data_dir(cfg))
        m, n = 10, train.features.shape[1]
    else:
        train, test = load_adult(_resolve_data_dir(cfg))
        m, n = 2, train.features.shape[1]
    params = WorkloadParams(m, n, beta=cfg.beta, gamma=cfg.gamma)
    return train, test, params


def run(
    config: RunConfig,
    out_dir: str | Path | None = None,
    problem: tuple[Dataset, Dataset, int, int] | None = None,
) -> RunResult:
    """Execute one full run; optionally write metrics.csv/summary.json/model.npy.

    `problem` overrides the configured dataset with a prebuilt
    (train, test, n_classes, n_features) tuple; beta and gamma still come
    from the config.
    """
    cfg = config.resolved()
    t_start = time.monotonic()
    if problem is not None:
        train, test, m, n = problem
        params = WorkloadParams(m, n, beta=cfg.beta, gamma=cfg.gamma)
    else:
        train, test, params = _load_problem(cfg)
    dim = params.dim

    shards = partition(
        train,
        PartitionSpec(
            cfg.partition_scheme, cfg.n_clients, cfg.per_client_size, cfg.labels_per_client
        ),
        rng.stream(cfg.seed, rng.PARTITION),
    )
    states = [cl.init_state(s.owner, s.data, dim) for s in shards]

    accountant = None
    eps_round = 0.0
    if cfg.dp:
        pspec = PrivacySpec(
            delta=cfg.delta,
            c0=cfg.c0,
            p=cfg.clients_per_round / cfg.n_clients,
            q=cfg.q_max * cfg.batch_size / cfg.per_client_size,
        )
        eps_round = epsilon_for_budget(cfg.total_budget, pspec, cfg.rounds)
        accountant = PrivacyAccountant(pspec, eps_round, cfg.n_clients)

    sparse = cfg.algorithm == "bsdp-fedpdm"
    k_up = k_for_ratio(cfg.alpha_up, dim) if sparse else dim
    k_down = k_for_ratio(cfg.alpha_down, dim) if sparse else dim

    meter = CommMeter(cfg.count_index_bits)
    writer = None
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        writer = MetricsWriter(Path(out_dir) / "metrics.csv")
    records: list[RoundRecord] = []
    x0 = np.zeros(dim)
    q_sum = q_rounds = 0

    try:
        for t in range(cfg.rounds):
            eta_t = cfg.eta0 / math.sqrt(1.0 + t)
            sigma_t = 0.0
            if cfg.dp:
                sens = sensitivity(
                    SensitivityParams(cfg.rho, eta_t, cfg.q_max, cfg.clip_bound)
                )
                sigma_t = noise_sigma(sens, eps_round, cfg.delta)
            local_cfg = cl.LocalConfig(
                eta=eta_t,
                rho=cfg.rho,
                nu=cfg.nu,
                q_max=cfg.q_max,
                batch_size=cfg.batch_size,
                clip_bound=cfg.clip_bound,
            )

            selected = sample_clients(
                cfg.n_clients, cfg.clients_per_round, rng.stream(cfg.seed, rng.CLIENT_SAMPLING, t)
            )

            if sparse:
                broadcast = densify(downlink_payload(x0, k_down))
            else:
                broadcast = x0
            meter.add_downlink(k_down, cfg.clients_per_round)

            uploads: list[np.ndarray] = []
            payloads: list[SparsePayload] = []
            q_vals = []
            for i in selected:
                i = int(i)
                states[i], y, q_used = cl.local_round(
                    states[i], broadcast, local_cfg, params, rng.stream(cfg.seed, rng.BATCH, i, t)
                )
                q_vals.append(q_used)
                noise_rng = rng.stream(cfg.seed, rng.NOISE, i, t)
                if sparse:
                    if cfg.sparsifier == "top":
                        payload = top_k(y, k_up)
                    else:
                        payload = rand_k(y, k_up, rng.stream(cfg.seed, rng.RAND_K, i, t))
                    values = cl.perturb_upload(payload.values, sigma_t, noise_rng)
                    payloads.append(SparsePayload(dim, payload.indices, values))
                else:
                    uploads.append(cl.perturb_upload(y, sigma_t, noise_rng))
            meter.add_uplink(k_up, cfg.clients_per_round)

            if sparse:
                x0 = sparse_global_update(payloads, dim, cfg.gamma, cfg.rho)
            else:
                x0 = dense_global_update(uploads, cfg.gamma, cfg.rho)

            if accountant is not None:
                accountant.record_round(selected)
            q_sum += sum(q_vals)
            q_rounds += len(q_vals)

            if (t + 1) % cfg.eval_every == 0 or t == cfg.rounds - 1:
                rec = RoundRecord(
                    round=t + 1,
                    accuracy=predict_accuracy(x0, test, params),
                    p_measure=stationarity_measure(states, x0, params, cfg.rho),
                    uplink_bits=meter.uplink_bits,
                    downlink_bits=meter.downlink_bits,
                    eps_cum_max=accountant.max_loss() if accountant else 0.0,
                    q_mean=float(np.mean(q_vals)),
                    sigma_mean=sigma_t,
                )
                records.append(rec)
                if writer is not None:
                    writer.append(rec)
                log.info(
                    "round %d: accuracy %.4f P %.4g", rec.round, rec.accuracy, rec.p_measure
                )
    finally:
        if writer is not None:
            writer.close()

    summary = {
        "config": asdict(cfg),
        "dim": dim,
        "final_accuracy": records[-1].accuracy,
        "final_p_measure": records[-1].p_measure,
        "uplink_bits": meter.uplink_bits,
        "downlink_bits": meter.downlink_bits,
        "epsilon_round": eps_round,
        "eps_cum_max": records[-1].eps_cum_max,
        "mean_q_used": q_sum / q_rounds if q_rounds else 0.0,
        "zero_fraction": float(np.mean(x0 == 0.0)),
        "wall_seconds": time.monotonic() - t_start,
    }
    if out_dir is not None:
        out = Path(out_dir)
        np.save(out / "model.npy", x0)
        write_summary(summary, out / "summary.json")
    return RunResult(cfg, records, x0, summary)
