"""Multiclass logistic workload with a non-convex regularizer and l1 prox.

The model is a flat vector x of length m*n, viewed row-major as an (m, n)
matrix X with one row of weights per class; feature vectors carry an explicit
bias coordinate. The smooth local objective on a sample set D is

    f(X; D) = (1/|D|) sum_j ln(1 + exp(-x_label_j . a_j))
              + beta * sum_{r,c} X_rc^2 / (1 + X_rc^2)

where the regularizer is not divided by |D|. The non-smooth l1 part
gamma*||x||_1 is never differentiated; the server handles it through the
proximal operator (soft thresholding with threshold gamma/rho).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit


@dataclass(frozen=True)
class WorkloadParams:
    """Shape and regularization of the learning problem.

    n_features counts the bias coordinate, so raw inputs have n_features - 1
    informative columns. gamma only matters to the server-side prox.
    """

    n_classes: int
    n_features: int
    beta: float = 0.0
    gamma: float = 0.0

    def __post_init__(self) -> None:
        if self.n_classes < 1 or self.n_features < 1:
            raise ValueError("n_classes and n_features must be positive")
        if self.beta < 0 or self.gamma < 0:
            raise ValueError("beta and gamma must be non-negative")

    @property
    def dim(self) -> int:
        return self.n_classes * self.n_features


@dataclass(frozen=True)
class Sample:
    """One labeled example: a feature vector (bias included) and a class id."""

    features: np.ndarray
    label: int


@dataclass(frozen=True)
class Dataset:
    """A column-stacked set of samples.

    features has shape (count, n_features) float64, labels (count,) int64.
    Mini-batches, client shards and test sets all use this container.
    """

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        f = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if f.ndim != 2:
            raise ValueError("features must be a 2-d array")
        if y.ndim != 1 or y.shape[0] != f.shape[0]:
            raise ValueError("labels must be 1-d and match the feature rows")
        if y.size and y.min() < 0:
            raise ValueError("labels must be non-negative")
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "labels", y)

    @classmethod
    def from_samples(cls, samples) -> "Dataset":
        samples = list(samples)
        if not samples:
            raise ValueError("cannot build a dataset from zero samples")
        feats = np.stack([np.asarray(s.features, dtype=np.float64) for s in samples])
        labels = np.array([s.label for s in samples], dtype=np.int64)
        return cls(feats, labels)

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def subset(self, indices: np.ndarray) -> "Dataset":
        return Dataset(self.features[indices], self.labels[indices])

    def sample(self, i: int) -> Sample:
        return Sample(self.features[i], int(self.labels[i]))


def zero_model(params: WorkloadParams) -> np.ndarray:
    return np.zeros(params.dim, dtype=np.float64)


def _check_compat(model: np.ndarray, data: Dataset, params: WorkloadParams) -> None:
    if model.shape != (params.dim,):
        raise ValueError(f"model must have shape ({params.dim},), got {model.shape}")
    if data.features.shape[1] != params.n_features:
        raise ValueError("dataset feature width does not match the workload")
    if len(data) == 0:
        raise ValueError("empty dataset")
    if data.labels.max() >= params.n_classes:
        raise ValueError("dataset contains a label outside the workload classes")


def _true_class_scores(model: np.ndarray, data: Dataset, params: WorkloadParams) -> np.ndarray:
    X = model.reshape(params.n_classes, params.n_features)
    scores = data.features @ X.T
    return scores[np.arange(len(data)), data.labels]


def local_loss(model: np.ndarray, data: Dataset, params: WorkloadParams) -> float:
    """Smooth local objective value (data term averaged, beta term not)."""
    _check_compat(model, data, params)
    s = _true_class_scores(model, data, params)
    loss = float(np.logaddexp(0.0, -s).mean())
    if params.beta:
        X = model.reshape(params.n_classes, params.n_features)
        loss += params.beta * float(np.sum(X * X / (1.0 + X * X)))
    return loss


def local_gradient(model: np.ndarray, data: Dataset, params: WorkloadParams) -> np.ndarray:
    """Exact gradient of local_loss with respect to the flat model vector."""
    _check_compat(model, data, params)
    count = len(data)
    s = _true_class_scores(model, data, params)
    # d/ds ln(1+exp(-s)) = -sigmoid(-s); scatter onto the true-class rows.
    coef = -expit(-s) / count
    onehot = np.zeros((count, params.n_classes))
    onehot[np.arange(count), data.labels] = coef
    grad = onehot.T @ data.features
    if params.beta:
        X = model.reshape(params.n_classes, params.n_features)
        denom = 1.0 + X * X
        grad = grad + params.beta * 2.0 * X / (denom * denom)
    return grad.ravel()


def clip_by_norm(v: np.ndarray, bound: float) -> np.ndarray:
    """Rescale v onto the l2 ball of radius bound when it falls outside."""
    if bound <= 0:
        raise ValueError("clip bound must be positive")
    norm = float(np.linalg.norm(v))
    if norm > bound:
        return v * (bound / norm)
    return v


def soft_threshold(u: np.ndarray, tau: float) -> np.ndarray:
    if tau < 0:
        raise ValueError("threshold must be non-negative")
    return np.sign(u) * np.maximum(np.abs(u) - tau, 0.0)


def prox_l1(u: np.ndarray, gamma: float, rho: float) -> np.ndarray:
    """prox_{rho^-1 gamma ||.||_1}(u): soft threshold at gamma/rho.

    Minimizes gamma*||z||_1 + (rho/2)*||z - u||^2 coordinate-wise.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    return soft_threshold(u, gamma / rho)


def predict_accuracy(model: np.ndarray, data: Dataset, params: WorkloadParams) -> float:
    """Fraction of samples whose argmax class score matches the label.

    Ties go to the lowest class index. Raw scores are used directly; the
    softmax normalizer is monotone so decisions are identical and no
    exponentials can overflow.
    """
    _check_compat(model, data, params)
    X = model.reshape(params.n_classes, params.n_features)
    pred = np.argmax(data.features @ X.T, axis=1)
    return float(np.mean(pred == data.labels))
