"""Gaussian-mechanism calibration and privacy accounting.

Sensitivity of the uploaded vector after Q clipped-gradient inner steps:

    s = 4 * eta * G * sum_{j=0}^{Q-1} |1 - rho*eta|^j

written in closed form below. Per-round noise follows the classical Gaussian
mechanism, sigma = s * sqrt(2 ln(1.25/delta)) / eps. Total privacy loss over
T rounds with client participation fraction p and per-round data fraction q:

    eps_total = c0 * q^2 * eps * sqrt(p * T / (1 - q))

which is inverted to derive the constant per-round eps from a total budget.
The planner uses the worst case Q = q_max everywhere; the accountant tracks
realized participation per client.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# |1 - rho*eta| within this distance of 1 uses the linear-in-Q branch.
_GEO_TOL = 1e-12


@dataclass(frozen=True)
class SensitivityParams:
    """Inputs of the sensitivity bound for one client round."""

    rho: float
    eta: float
    n_steps: int
    clip_bound: float

    def __post_init__(self) -> None:
        if self.rho <= 0 or self.eta <= 0:
            raise ValueError("rho and eta must be positive")
        if self.n_steps < 1:
            raise ValueError("n_steps must be at least 1")
        if self.clip_bound <= 0:
            raise ValueError("clip_bound must be positive")


def sensitivity(params: SensitivityParams) -> float:
    """l2 sensitivity of the uploaded y vector after n_steps inner steps."""
    r = abs(1.0 - params.rho * params.eta)
    if abs(r - 1.0) <= _GEO_TOL:
        geo = float(params.n_steps)
    else:
        geo = (1.0 - r ** params.n_steps) / (1.0 - r)
    return 4.0 * params.eta * params.clip_bound * geo


def noise_sigma(sens: float, epsilon: float, delta: float) -> float:
    """Gaussian-mechanism standard deviation for one (epsilon, delta) release."""
    if sens < 0:
        raise ValueError("sensitivity must be non-negative")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    return sens * math.sqrt(2.0 * math.log(1.25 / delta)) / epsilon


@dataclass(frozen=True)
class PrivacySpec:
    """Static quantities of the accounting formula.

    p is the per-round participation probability K/N; q the fraction of a
    shard a client touches per round, Q*b/|D_i| (planned with Q = q_max).
    """

    delta: float
    c0: float
    p: float
    q: float

    def __post_init__(self) -> None:
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.c0 <= 0:
            raise ValueError("c0 must be positive")
        if not 0.0 < self.p <= 1.0:
            raise ValueError("participation fraction p must lie in (0, 1]")
        if not 0.0 < self.q < 1.0:
            raise ValueError(
                "data fraction q must lie in (0, 1); reduce q_max or the batch "
                "size, or enlarge the shards"
            )


def total_loss(epsilon_round: float, spec: PrivacySpec, rounds: int) -> float:
    """Cumulative privacy loss after `rounds` rounds at a fixed per-round eps."""
    if epsilon_round <= 0:
        raise ValueError("epsilon_round must be positive")
    if rounds < 0:
        raise ValueError("rounds must be non-negative")
    if rounds == 0:
        return 0.0
    return spec.c0 * spec.q**2 * epsilon_round * math.sqrt(spec.p * rounds / (1.0 - spec.q))


def epsilon_for_budget(budget: float, spec: PrivacySpec, rounds: int) -> float:
    """Per-round epsilon whose total loss over `rounds` rounds equals budget."""
    if budget <= 0:
        raise ValueError("budget must be positive")
    if rounds < 1:
        raise ValueError("rounds must be at least 1")
    return budget / (spec.c0 * spec.q**2 * math.sqrt(spec.p * rounds / (1.0 - spec.q)))


class PrivacyAccountant:
    """Tracks realized cumulative privacy loss per client.

    The planning formula uses the expected participation count p*T; here the
    expected count is replaced by each client's realized number of
    participations, so the reported loss grows only when a client is actually
    selected.
    """

    def __init__(self, spec: PrivacySpec, epsilon_round: float, n_clients: int) -> None:
        if epsilon_round <= 0:
            raise ValueError("epsilon_round must be positive")
        if n_clients < 1:
            raise ValueError("n_clients must be positive")
        self.spec = spec
        self.epsilon_round = epsilon_round
        self._participations = np.zeros(n_clients, dtype=np.int64)

    def record_round(self, client_ids) -> None:
        ids = np.asarray(client_ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= self._participations.size):
            raise ValueError("client id out of range")
        if ids.size != np.unique(ids).size:
            raise ValueError("a client cannot participate twice in one round")
        self._participations[ids] += 1

    @property
    def participations(self) -> np.ndarray:
        return self._participations.copy()

    def per_client_loss(self) -> np.ndarray:
        s = self.spec
        counts = self._participations.astype(np.float64)
        return s.c0 * s.q**2 * self.epsilon_round * np.sqrt(counts / (1.0 - s.q))

    def max_loss(self) -> float:
        return float(self.per_client_loss().max())
