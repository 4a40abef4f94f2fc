"""Client-side primal-dual updates with adaptive early stopping.

Each participating client starts its inner loop from the broadcast global
model, runs clipped stochastic gradient steps on the augmented Lagrangian

    x <- x - eta * (clip(grad f(x; B)) - lam + rho * (x - x0))

and stops after the step whose direction satisfied ||direction||^2 <= nu,
or after q_max steps. It then refreshes its dual variable and uploads
y = x - lam/rho, optionally perturbed with Gaussian noise.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .workload import Dataset, WorkloadParams, clip_by_norm, local_gradient


@dataclass(frozen=True)
class LocalConfig:
    """Per-round knobs of the inner loop."""

    eta: float
    rho: float
    nu: float
    q_max: int
    batch_size: int
    clip_bound: float

    def __post_init__(self) -> None:
        if self.eta <= 0 or self.rho <= 0:
            raise ValueError("eta and rho must be positive")
        if self.nu <= 0:
            raise ValueError("nu must be positive")
        if self.q_max < 1:
            raise ValueError("q_max must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.clip_bound <= 0:
            raise ValueError("clip_bound must be positive")


@dataclass(frozen=True)
class ClientState:
    """Persistent per-client quantities between rounds."""

    client_id: int
    x: np.ndarray
    lam: np.ndarray
    data: Dataset


def init_state(client_id: int, data: Dataset, dim: int) -> ClientState:
    return ClientState(client_id, np.zeros(dim), np.zeros(dim), data)


def draw_batch(data: Dataset, batch_size: int, rng: np.random.Generator) -> Dataset:
    """Uniform mini-batch without replacement from a client shard."""
    if batch_size > len(data):
        raise ValueError("batch_size exceeds the shard size")
    idx = rng.choice(len(data), size=batch_size, replace=False)
    return data.subset(idx)


def local_round(
    state: ClientState,
    x0: np.ndarray,
    cfg: LocalConfig,
    params: WorkloadParams,
    rng: np.random.Generator,
) -> tuple[ClientState, np.ndarray, int]:
    """Run one client round from the broadcast model x0.

    Returns the refreshed state, the upload vector y (noise-free) and the
    number of inner iterations actually used.
    """
    x = x0.copy()
    q_used = cfg.q_max
    for r in range(cfg.q_max):
        batch = draw_batch(state.data, cfg.batch_size, rng)
        g = clip_by_norm(local_gradient(x, batch, params), cfg.clip_bound)
        direction = g - state.lam + cfg.rho * (x - x0)
        x = x - cfg.eta * direction
        if float(direction @ direction) <= cfg.nu:
            q_used = r + 1
            break
    lam = state.lam + cfg.rho * (x0 - x)
    y = x - lam / cfg.rho
    return replace(state, x=x, lam=lam), y, q_used


def perturb_upload(y: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Add iid Gaussian noise of scale sigma; sigma == 0 returns y unchanged."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0.0:
        return y.copy()
    return y + rng.normal(0.0, sigma, size=y.shape)
