"""Server-side client sampling, aggregation and downlink compression."""
from __future__ import annotations

import numpy as np

from .sparsify import SparsePayload, sparse_aggregate, top_k
from .workload import prox_l1


def sample_clients(n_clients: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform subset of `count` distinct client ids, ascending."""
    if not 1 <= count <= n_clients:
        raise ValueError("count must lie in [1, n_clients]")
    return np.sort(rng.choice(n_clients, size=count, replace=False))


def dense_global_update(uploads, gamma: float, rho: float) -> np.ndarray:
    """New global model from dense uploads: prox of the plain average."""
    uploads = list(uploads)
    if not uploads:
        raise ValueError("need at least one upload")
    total = np.sum(np.stack(uploads), axis=0)
    return prox_l1(total / len(uploads), gamma, rho)


def sparse_global_update(payloads, dim: int, gamma: float, rho: float) -> np.ndarray:
    """New global model from sparse uploads: prox of the coverage-weighted average."""
    return prox_l1(sparse_aggregate(payloads, dim), gamma, rho)


def downlink_payload(x0: np.ndarray, k: int) -> SparsePayload:
    """Compress the global model for broadcast; always magnitude top-k."""
    return top_k(x0, k)
