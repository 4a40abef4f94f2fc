"""Top-k / rand-k sparsification, payload wire codec, sparse aggregation.

A payload carries the k retained coordinates of a d-dim vector as an
index/value pair list, indices strictly increasing. Aggregation divides the
coordinate-wise sum of densified uploads by how many uploads covered each
coordinate (floored at one), which removes the dilution that plain averaging
of differently-supported sparse vectors would introduce.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import CorruptDataError


@dataclass(frozen=True)
class SparsePayload:
    """k coordinates of a d-dim vector in canonical (ascending index) order."""

    dim: int
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        idx = np.asarray(self.indices, dtype=np.int64)
        val = np.asarray(self.values, dtype=np.float64)
        if self.dim < 1:
            raise ValueError("payload dimension must be positive")
        if idx.ndim != 1 or val.ndim != 1 or idx.shape != val.shape:
            raise ValueError("indices and values must be 1-d and equally long")
        if idx.size < 1 or idx.size > self.dim:
            raise ValueError("payload must retain between 1 and dim coordinates")
        if idx.size and (idx[0] < 0 or idx[-1] >= self.dim or np.any(np.diff(idx) <= 0)):
            raise ValueError("indices must be strictly increasing within [0, dim)")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    @property
    def k(self) -> int:
        return int(self.indices.size)


def k_for_ratio(alpha: float, dim: int) -> int:
    """Retained coordinate count for a compression ratio: round(alpha*d), min 1."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError("compression ratio must lie in (0, 1]")
    if dim < 1:
        raise ValueError("dim must be positive")
    return int(min(dim, max(1, round(alpha * dim))))


def top_k(y: np.ndarray, k: int) -> SparsePayload:
    """Keep the k largest-magnitude coordinates; ties keep the lower index."""
    d = y.size
    if not 1 <= k <= d:
        raise ValueError("k must lie in [1, dim]")
    # Stable sort on negated magnitudes: equal magnitudes stay in index order.
    order = np.argsort(-np.abs(y), kind="stable")[:k]
    idx = np.sort(order)
    return SparsePayload(d, idx, y[idx].copy())


def rand_k(y: np.ndarray, k: int, rng: np.random.Generator) -> SparsePayload:
    """Keep k coordinates chosen uniformly without replacement."""
    d = y.size
    if not 1 <= k <= d:
        raise ValueError("k must lie in [1, dim]")
    idx = np.sort(rng.choice(d, size=k, replace=False))
    return SparsePayload(d, idx, y[idx].copy())


def densify(payload: SparsePayload) -> np.ndarray:
    out = np.zeros(payload.dim, dtype=np.float64)
    out[payload.indices] = payload.values
    return out


def aggregation_weights(payloads, dim: int) -> np.ndarray:
    """Per-coordinate coverage counts across payloads, floored at one."""
    counts = np.zeros(dim, dtype=np.int64)
    for p in payloads:
        if p.dim != dim:
            raise ValueError("payload dimension mismatch")
        counts[p.indices] += 1
    return np.maximum(counts, 1).astype(np.float64)


def sparse_aggregate(payloads, dim: int) -> np.ndarray:
    """Coverage-weighted average of sparse uploads (before any prox step)."""
    payloads = list(payloads)
    if not payloads:
        raise ValueError("need at least one payload")
    w = aggregation_weights(payloads, dim)
    total = np.sum(np.stack([densify(p) for p in payloads]), axis=0)
    return total / w


_HEADER = struct.Struct("<II")


def payload_to_bytes(payload: SparsePayload) -> bytes:
    """Wire format: [dim u32][k u32][indices k*u32][values k*f32], little endian."""
    idx = payload.indices.astype("<u4")
    val = payload.values.astype("<f4")
    return _HEADER.pack(payload.dim, payload.k) + idx.tobytes() + val.tobytes()


def payload_from_bytes(buf: bytes) -> SparsePayload:
    if len(buf) < _HEADER.size:
        raise CorruptDataError("payload shorter than its header")
    dim, k = _HEADER.unpack_from(buf)
    expected = _HEADER.size + 8 * k
    if len(buf) != expected:
        raise CorruptDataError(f"payload length {len(buf)} != expected {expected}")
    if dim < 1 or k < 1 or k > dim:
        raise CorruptDataError("payload header violates 1 <= k <= dim")
    off = _HEADER.size
    idx = np.frombuffer(buf, dtype="<u4", count=k, offset=off).astype(np.int64)
    val = np.frombuffer(buf, dtype="<f4", count=k, offset=off + 4 * k).astype(np.float64)
    if idx[0] < 0 or idx[-1] >= dim or np.any(np.diff(idx) <= 0):
        raise CorruptDataError("payload indices not strictly increasing in range")
    return SparsePayload(int(dim), idx, val)
