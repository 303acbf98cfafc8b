import numpy as np
import pytest

from kandet import layers
from kandet.layers import (
    BatchNormLayer,
    BatchSizeError,
    DenseLayer,
    DropoutLayer,
    KanLinearLayer,
    batchnorm_backward,
    batchnorm_forward,
    dense_backward,
    dense_forward,
    dropout_backward,
    dropout_forward,
    kan_backward,
    kan_forward,
    relu,
    sigmoid,
    silu,
    softmax_rows,
)
from kandet.numerics import SeededRng, ShapeError, finite_difference_gradient
from kandet.spline import basis_at, build_grid

from oracles import kan_double_sum


# ---------------------------------------------------------------------------
# activations

def test_silu_values():
    assert silu(np.array([0.0]))[0] == 0.0
    assert abs(silu(np.array([40.0]))[0] - 40.0) < 1e-9
    # 1/(1+e^-1), frozen from an independent evaluation
    assert abs(silu(np.array([1.0]))[0] - 0.7310585786300049) < 1e-12


def test_sigmoid_symmetry_and_extremes():
    assert sigmoid(np.array([0.0]))[0] == 0.5
    z = SeededRng(0).normal(100, 0.0, 50.0)
    s = sigmoid(z) + sigmoid(-z)
    assert np.abs(s - 1.0).max() < 1e-12
    assert np.isfinite(sigmoid(np.array([750.0, -750.0]))).all()


def test_relu_and_softmax_basics():
    assert relu(np.array([-3.0]))[0] == 0.0
    assert np.array_equal(softmax_rows(np.array([[0.0, 0.0]])), [[0.5, 0.5]])


def test_softmax_rows_sum_to_one_with_huge_entries():
    rng = SeededRng(1)
    x = rng.normal(40, 0.0, 300.0).reshape(10, 4)
    x[0, 0] = 700.0
    x[1, 1] = -700.0
    p = softmax_rows(x)
    assert np.abs(p.sum(axis=1) - 1.0).max() < 1e-12
    assert (p >= 0).all()


# ---------------------------------------------------------------------------
# KAN linear

def _small_kan(seed=0, in_dim=2, out_dim=2, grid_size=4, order=3):
    grid = build_grid(grid_size, order, -1.0, 1.0)
    return KanLinearLayer.initialized(in_dim, out_dim, grid, SeededRng(seed))


def test_kan_forward_zero_weights():
    layer = _small_kan()
    layer.base_weight[:] = 0.0
    layer.spline_weight[:] = 0.0
    x = SeededRng(1).uniform(6).reshape(3, 2) * 2 - 1
    assert np.array_equal(kan_forward(layer, x), np.zeros((3, 2)))


def test_kan_forward_base_path_isolation():
    layer = _small_kan()
    layer.spline_weight[:] = 0.0
    layer.base_weight = np.eye(2)
    x = SeededRng(2).uniform(8).reshape(4, 2) * 2 - 1
    np.testing.assert_allclose(kan_forward(layer, x), silu(x), atol=1e-15)


def test_kan_forward_matches_double_sum_oracle():
    layer = _small_kan(seed=3)
    x = SeededRng(4).uniform(10).reshape(5, 2) * 2 - 1
    expected = kan_double_sum(layer.base_weight, layer.spline_weight, layer.grid, x, silu, basis_at)
    assert np.abs(kan_forward(layer, x) - expected).max() < 1e-12


def test_kan_forward_shape_error():
    with pytest.raises(ShapeError):
        kan_forward(_small_kan(), np.zeros((3, 5)))


def test_kan_backward_zero_upstream():
    layer = _small_kan(seed=5)
    x = SeededRng(6).uniform(4).reshape(2, 2) * 2 - 1
    g = kan_backward(layer, x, np.zeros((2, 2)))
    assert not g.base_weight.any() and not g.spline_weight.any() and not g.x.any()


def test_kan_backward_clamped_coordinate_spline_grad_zero():
    layer = _small_kan(seed=7)
    layer.base_weight[:] = 0.0  # isolate the spline path
    x = np.array([[1.4, 0.2], [-1.3, -0.4]])
    g = kan_backward(layer, x, np.ones((2, 2)))
    assert g.x[0, 0] == 0.0
    assert g.x[1, 0] == 0.0
    assert g.x[0, 1] != 0.0


def test_kan_backward_matches_finite_differences():
    for seed in range(20):
        layer = _small_kan(seed=seed, in_dim=3, out_dim=2, grid_size=4, order=(seed % 3) + 1)
        rng = SeededRng(100 + seed)
        x = (rng.uniform(6) * 1.8 - 0.9).reshape(2, 3)
        # keep off the knots so central differences stay one-sided-free
        for _ in range(20):
            near = np.min(np.abs(x.ravel()[:, None] - layer.grid.knots[None, :]), axis=1) < 1e-4
            if not near.any():
                break
            x.ravel()[near] = rng.uniform(int(near.sum())) * 1.8 - 0.9
        upstream = rng.normal(4).reshape(2, 2)
        grads = kan_backward(layer, x, upstream)

        def f_x(v):
            return float((upstream * kan_forward(layer, v.reshape(2, 3))).sum())

        fd = finite_difference_gradient(f_x, x.ravel())
        err = np.linalg.norm(grads.x.ravel() - fd) / max(np.linalg.norm(fd), 1e-12)
        assert err < 1e-5, f"seed {seed}: input grad err {err}"

        def f_spline(v):
            trial = KanLinearLayer(layer.in_dim, layer.out_dim, layer.grid,
                                   layer.base_weight, v.reshape(layer.spline_weight.shape))
            return float((upstream * kan_forward(trial, x)).sum())

        fd = finite_difference_gradient(f_spline, layer.spline_weight.ravel())
        err = np.linalg.norm(grads.spline_weight.ravel() - fd) / max(np.linalg.norm(fd), 1e-12)
        assert err < 1e-5, f"seed {seed}: spline grad err {err}"


# ---------------------------------------------------------------------------
# dense

def test_dense_constant_rows_from_zero_weight():
    layer = DenseLayer(np.zeros((2, 3)), np.array([1.5, -2.0]))
    out = dense_forward(layer, SeededRng(0).normal(9).reshape(3, 3))
    assert np.array_equal(out, np.tile([1.5, -2.0], (3, 1)))


def test_dense_one_by_one():
    layer = DenseLayer(np.array([[2.0]]), np.array([1.0]))
    assert dense_forward(layer, np.array([[3.0]]))[0, 0] == 7.0


def test_dense_backward_matches_finite_differences():
    for seed in range(20):
        rng = SeededRng(seed)
        layer = DenseLayer.initialized(3, 2, rng)
        x = rng.normal(6).reshape(2, 3)
        upstream = rng.normal(4).reshape(2, 2)
        grads = dense_backward(layer, x, upstream)
        packed = np.concatenate([layer.weight.ravel(), layer.bias, x.ravel()])

        def f(v):
            w = v[:6].reshape(2, 3)
            b = v[6:8]
            xx = v[8:].reshape(2, 3)
            return float((upstream * dense_forward(DenseLayer(w, b), xx)).sum())

        fd = finite_difference_gradient(f, packed)
        analytic = np.concatenate([grads.weight.ravel(), grads.bias, grads.x.ravel()])
        err = np.linalg.norm(analytic - fd) / max(np.linalg.norm(fd), 1e-12)
        assert err < 1e-5


# ---------------------------------------------------------------------------
# batch norm

def test_batchnorm_train_standardizes():
    layer = BatchNormLayer.initialized(4)
    x = SeededRng(1).normal(400, 3.0, 2.5).reshape(100, 4)
    out = batchnorm_forward(layer, x, layers.TRAIN)
    assert np.abs(out.mean(axis=0)).max() < 1e-9
    assert np.abs(out.var(axis=0) - 1.0).max() < 1e-4  # off by stability_eps


def test_batchnorm_affine_params():
    layer = BatchNormLayer.initialized(2)
    layer.gamma[:] = 2.0
    layer.beta[:] = 3.0
    x = SeededRng(2).normal(200).reshape(100, 2)
    out = batchnorm_forward(layer, x, layers.TRAIN)
    assert np.abs(out.mean(axis=0) - 3.0).max() < 1e-9
    assert np.abs(out.std(axis=0) - 2.0).max() < 1e-3


def test_batchnorm_batch_of_one_rejected_in_train():
    with pytest.raises(BatchSizeError):
        batchnorm_forward(BatchNormLayer.initialized(2), np.zeros((1, 2)), layers.TRAIN)


def test_batchnorm_eval_uses_running_stats_and_is_deterministic():
    layer = BatchNormLayer.initialized(3)
    x_train = SeededRng(3).normal(300, 1.0, 2.0).reshape(100, 3)
    batchnorm_forward(layer, x_train, layers.TRAIN)
    x = np.array([[0.3, -0.1, 2.0]])
    a = batchnorm_forward(layer, x, layers.EVAL)
    b = batchnorm_forward(layer, x, layers.EVAL)
    assert np.array_equal(a, b)


def test_batchnorm_running_stats_update():
    layer = BatchNormLayer.initialized(1, momentum=0.1)
    x = np.array([[0.0], [2.0]])  # mean 1, biased var 1, unbiased var 2
    batchnorm_forward(layer, x, layers.TRAIN)
    assert layer.running_mean[0] == pytest.approx(0.9 * 0.0 + 0.1 * 1.0)
    assert layer.running_var[0] == pytest.approx(0.9 * 1.0 + 0.1 * 2.0)


def test_batchnorm_backward_matches_finite_differences():
    for seed in range(20):
        rng = SeededRng(seed)
        dim, batch = 3, 5
        layer = BatchNormLayer.initialized(dim)
        layer.gamma = rng.normal(dim, 1.0, 0.2)
        layer.beta = rng.normal(dim, 0.0, 0.2)
        x = rng.normal(batch * dim).reshape(batch, dim)
        upstream = rng.normal(batch * dim).reshape(batch, dim)
        grads = batchnorm_backward(layer, x, upstream)
        packed = np.concatenate([layer.gamma, layer.beta, x.ravel()])

        def f(v):
            trial = BatchNormLayer.initialized(dim)
            trial.gamma = v[:dim].copy()
            trial.beta = v[dim : 2 * dim].copy()
            xx = v[2 * dim :].reshape(batch, dim)
            return float((upstream * batchnorm_forward(trial, xx, layers.TRAIN)).sum())

        fd = finite_difference_gradient(f, packed)
        analytic = np.concatenate([grads.gamma, grads.beta, grads.x.ravel()])
        err = np.linalg.norm(analytic - fd) / max(np.linalg.norm(fd), 1e-12)
        assert err < 1e-5


# ---------------------------------------------------------------------------
# dropout

def test_dropout_eval_is_identity():
    layer = DropoutLayer(0.5)
    x = SeededRng(4).normal(12).reshape(3, 4)
    out, mask = dropout_forward(layer, x, None, layers.EVAL)
    assert np.array_equal(out, x)
    assert mask.all()


def test_dropout_rate_zero_identity_in_train():
    layer = DropoutLayer(0.0)
    x = SeededRng(5).normal(12).reshape(3, 4)
    out, mask = dropout_forward(layer, x, SeededRng(6), layers.TRAIN)
    assert np.array_equal(out, x)
    assert mask.all()


def test_dropout_survivor_fraction_and_expectation():
    layer = DropoutLayer(0.5)
    x = np.ones((1000, 1000))
    out, mask = dropout_forward(layer, x, SeededRng(7), layers.TRAIN)
    survivors = mask.mean()
    assert abs(survivors - 0.5) < 0.002
    assert abs(out.mean() - 1.0) < 0.01  # inverted scaling preserves expectation


def test_dropout_backward_applies_same_mask():
    layer = DropoutLayer(0.25)
    x = SeededRng(8).normal(20).reshape(4, 5)
    _, mask = dropout_forward(layer, x, SeededRng(9), layers.TRAIN)
    upstream = np.ones_like(x)
    dx = dropout_backward(layer, upstream, mask)
    assert np.array_equal(dx, mask / 0.75)


def test_dropout_invalid_rate():
    with pytest.raises(ValueError):
        DropoutLayer(1.0)
