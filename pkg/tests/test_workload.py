import math

import numpy as np
import pytest

from fedpdm.workload import (
    Dataset,
    Sample,
    WorkloadParams,
    clip_by_norm,
    local_gradient,
    local_loss,
    predict_accuracy,
    prox_l1,
    soft_threshold,
    zero_model,
)

from oracles import grad_central_fd, loss_brute, prox_candidates


def random_instance(rng, n_classes=None, n_features=None, count=None, beta=None):
    m = n_classes or rng.integers(1, 5)
    n = n_features or rng.integers(1, 7)
    b = count or rng.integers(1, 9)
    beta = beta if beta is not None else float(rng.uniform(0, 2))
    model = rng.normal(size=m * n)
    data = Dataset(rng.normal(size=(b, n)), rng.integers(0, m, size=b))
    return model, data, WorkloadParams(int(m), int(n), beta=beta)


def test_loss_single_sample_value():
    params = WorkloadParams(1, 1, beta=0.5)
    data = Dataset(np.array([[1.0]]), np.array([0]))
    loss = local_loss(np.array([2.0]), data, params)
    # ln(1+e^-2) + 0.5 * 4/5
    assert abs(loss - 0.5269280110429726) < 1e-12


def test_loss_zero_model_is_ln2():
    params = WorkloadParams(3, 4)
    rng = np.random.default_rng(0)
    data = Dataset(rng.normal(size=(7, 4)), rng.integers(0, 3, size=7))
    assert abs(local_loss(zero_model(params), data, params) - math.log(2.0)) < 1e-12


def test_loss_matches_bruteforce():
    rng = np.random.default_rng(1)
    for _ in range(50):
        model, data, params = random_instance(rng)
        got = local_loss(model, data, params)
        want = loss_brute(model, data.features, data.labels,
                          params.n_classes, params.n_features, params.beta)
        assert abs(got - want) <= 1e-12 * max(1.0, abs(want))


def test_regularizer_not_divided_by_batch_size():
    rng = np.random.default_rng(2)
    model, data, params = random_instance(rng, beta=0.7)
    plain = WorkloadParams(params.n_classes, params.n_features, beta=0.0)
    X = model.reshape(params.n_classes, params.n_features)
    reg = 0.7 * float(np.sum(X * X / (1 + X * X)))
    for dup in (1, 3):
        wide = Dataset(np.tile(data.features, (dup, 1)), np.tile(data.labels, dup))
        assert local_loss(model, wide, params) == pytest.approx(
            local_loss(model, wide, plain) + reg, rel=1e-12
        )


def test_gradient_zero_model_single_sample():
    params = WorkloadParams(2, 3)
    a = np.array([0.5, -1.0, 2.0])
    data = Dataset(a[None, :], np.array([1]))
    g = local_gradient(zero_model(params), data, params).reshape(2, 3)
    assert np.allclose(g[1], -a / 2.0, atol=1e-15)
    assert np.all(g[0] == 0.0)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(30):
        model, data, params = random_instance(rng)
        analytic = local_gradient(model, data, params)
        fd = grad_central_fd(lambda x: local_loss(x, data, params), model)
        err = np.linalg.norm(analytic - fd) / max(1.0, np.linalg.norm(fd))
        worst = max(worst, err)
    assert worst < 1e-4


def test_gradient_beta_term_is_additive():
    rng = np.random.default_rng(4)
    model, data, params = random_instance(rng, beta=1.3)
    plain = WorkloadParams(params.n_classes, params.n_features, beta=0.0)
    X = model.reshape(params.n_classes, params.n_features)
    reg_grad = 1.3 * 2.0 * X / (1.0 + X * X) ** 2
    diff = local_gradient(model, data, params) - local_gradient(model, data, plain)
    assert np.allclose(diff, reg_grad.ravel(), atol=1e-14)


def test_shape_and_label_validation():
    params = WorkloadParams(2, 3)
    data = Dataset(np.ones((2, 3)), np.array([0, 1]))
    with pytest.raises(ValueError):
        local_loss(np.zeros(5), data, params)
    bad_label = Dataset(np.ones((1, 3)), np.array([2]))
    with pytest.raises(ValueError):
        local_loss(zero_model(params), bad_label, params)
    with pytest.raises(ValueError):
        local_gradient(zero_model(params), Dataset(np.ones((1, 4)), np.array([0])), params)


def test_clip_rescales_to_bound():
    v = np.array([3.0, 4.0])
    out = clip_by_norm(v, 1.0)
    assert np.linalg.norm(out) == pytest.approx(1.0, rel=1e-12)
    assert np.allclose(out, v / 5.0)


def test_clip_passes_small_vectors_through():
    v = np.array([0.1, -0.2])
    assert np.array_equal(clip_by_norm(v, 1.0), v)
    z = np.zeros(4)
    assert np.array_equal(clip_by_norm(z, 1e-9), z)


def test_clip_tiny_bound_and_validation():
    v = np.ones(3)
    out = clip_by_norm(v, 1e-9)
    assert np.linalg.norm(out) == pytest.approx(1e-9, rel=1e-9)
    with pytest.raises(ValueError):
        clip_by_norm(v, 0.0)


def test_prox_example():
    u = np.array([1.5, -0.3, 0.05])
    assert np.allclose(prox_l1(u, 1.0, 10.0), [1.4, -0.2, 0.0], atol=1e-15)


def test_prox_gamma_zero_is_identity():
    rng = np.random.default_rng(5)
    u = rng.normal(size=20)
    assert np.array_equal(prox_l1(u, 0.0, 3.0), u)


def test_prox_matches_candidate_minimizer():
    rng = np.random.default_rng(6)
    for _ in range(40):
        u = rng.normal(size=12) * rng.uniform(0.1, 5)
        gamma = float(rng.uniform(0, 3))
        rho = float(rng.uniform(0.1, 20))
        assert np.allclose(prox_l1(u, gamma, rho),
                           prox_candidates(u, gamma, rho), atol=1e-12)


def test_prox_nonexpansive():
    rng = np.random.default_rng(7)
    for _ in range(40):
        u, v = rng.normal(size=(2, 8))
        out = prox_l1(u, 0.8, 2.0) - prox_l1(v, 0.8, 2.0)
        assert np.linalg.norm(out) <= np.linalg.norm(u - v) + 1e-12


def test_prox_validation():
    u = np.ones(2)
    with pytest.raises(ValueError):
        prox_l1(u, 1.0, 0.0)
    with pytest.raises(ValueError):
        prox_l1(u, -1.0, 1.0)
    with pytest.raises(ValueError):
        soft_threshold(u, -0.1)


def test_accuracy_tie_breaks_to_lowest_class():
    params = WorkloadParams(3, 2)
    data = Dataset(np.array([[1.0, 1.0], [2.0, 1.0]]), np.array([0, 2]))
    # Zero model scores everything 0 for every class -> predict class 0.
    assert predict_accuracy(zero_model(params), data, params) == 0.5


def test_accuracy_scale_invariant():
    rng = np.random.default_rng(8)
    params = WorkloadParams(4, 5)
    model = rng.normal(size=params.dim)
    data = Dataset(rng.normal(size=(50, 5)), rng.integers(0, 4, size=50))
    base = predict_accuracy(model, data, params)
    for c in (1e-6, 1.0, 1e6):
        assert predict_accuracy(c * model, data, params) == base


def test_accuracy_perfect_separable():
    params = WorkloadParams(2, 2)
    # Class row 1 scores positive on [1, 0], class row 0 on [-1, 0].
    model = np.array([-1.0, 0.0, 1.0, 0.0])
    data = Dataset(np.array([[1.0, 1.0], [-1.0, 1.0]]), np.array([1, 0]))
    assert predict_accuracy(model, data, params) == 1.0


def test_dataset_validation_and_samples():
    with pytest.raises(ValueError):
        Dataset(np.ones(3), np.array([0]))
    with pytest.raises(ValueError):
        Dataset(np.ones((2, 2)), np.array([0]))
    with pytest.raises(ValueError):
        Dataset(np.ones((1, 2)), np.array([-1]))
    ds = Dataset.from_samples([Sample(np.array([1.0, 2.0]), 1),
                               Sample(np.array([3.0, 4.0]), 0)])
    assert len(ds) == 2
    assert ds.sample(0).label == 1
    sub = ds.subset(np.array([1]))
    assert np.array_equal(sub.features, [[3.0, 4.0]])


def test_workload_params_validation():
    with pytest.raises(ValueError):
        WorkloadParams(0, 3)
    with pytest.raises(ValueError):
        WorkloadParams(2, 3, beta=-0.1)
    with pytest.raises(ValueError):
        WorkloadParams(2, 3, gamma=-0.1)
    assert WorkloadParams(3, 5).dim == 15
