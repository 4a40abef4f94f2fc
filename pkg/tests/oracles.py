"""Independent reference implementations used to cross-check the package.

Everything here is written with plain Python scalar math (or brute-force
enumeration), deliberately avoiding the vectorized formulations in the
package so that agreement is evidence rather than tautology.
"""
from __future__ import annotations

import itertools
import math

import numpy as np


def log1pexp(z: float) -> float:
    """ln(1 + e^z) without overflow."""
    if z > 35.0:
        return z + math.log1p(math.exp(-z))
    return math.log1p(math.exp(z))


def loss_brute(model, features, labels, n_classes, n_features, beta) -> float:
    """Sample-by-sample objective with per-coordinate Python loops."""
    X = [
        [float(model[r * n_features + c]) for c in range(n_features)]
        for r in range(n_classes)
    ]
    total = 0.0
    for row, label in zip(features, labels):
        s = sum(X[int(label)][c] * float(row[c]) for c in range(n_features))
        total += log1pexp(-s)
    total /= len(labels)
    for r in range(n_classes):
        for c in range(n_features):
            v = X[r][c]
            total += beta * v * v / (1.0 + v * v)
    return total


def grad_central_fd(fun, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar function of a flat vector."""
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fun(x + e) - fun(x - e)) / (2.0 * h)
    return g


def sensitivity_loop(rho: float, eta: float, n_steps: int, clip_bound: float) -> float:
    ratio = abs(1.0 - rho * eta)
    acc = 0.0
    term = 1.0
    for _ in range(n_steps):
        acc += term
        term *= ratio
    return 4.0 * eta * clip_bound * acc


def sigma_scalar(sens: float, eps: float, delta: float) -> float:
    variance = (2.0 * sens * sens * math.log(1.25 / delta)) / (eps * eps)
    return math.sqrt(variance)


def total_loss_scalar(c0: float, q: float, eps: float, p: float, rounds: int) -> float:
    if rounds == 0:
        return 0.0
    return c0 * (q * q) * eps * math.sqrt((p * rounds) / (1.0 - q))


def prox_candidates(u, gamma: float, rho: float) -> np.ndarray:
    """Coordinate-wise argmin of gamma|z| + (rho/2)(z-u)^2 over KKT candidates."""
    tau = gamma / rho

    def obj(z: float, ui: float) -> float:
        return gamma * abs(z) + 0.5 * rho * (z - ui) ** 2

    out = []
    for ui in np.asarray(u, dtype=float):
        cands = [0.0, ui - tau, ui + tau]
        out.append(min(cands, key=lambda z: obj(z, ui)))
    return np.asarray(out)


def best_k_support_energy(y: np.ndarray, k: int) -> float:
    """Max possible retained squared mass over all k-coordinate supports."""
    best = -1.0
    for support in itertools.combinations(range(y.size), k):
        energy = float(sum(y[list(support)] ** 2))
        best = max(best, energy)
    return best


def comm_bits_loop(k: int, rounds: int, n_clients: int, bits_per_value: int = 32) -> int:
    total = 0
    for _ in range(rounds):
        for _ in range(n_clients):
            total += bits_per_value * k
    return total
