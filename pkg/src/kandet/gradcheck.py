"""Finite-difference conformance suite for every hand-derived gradient.

Each component draws randomized instances, compares the analytic gradient of
a scalarized objective against `numerics.finite_difference_gradient`, and
records the worst norm-relative error.  The CLI `gradcheck` command prints
one line per component and fails if any worst error reaches the tolerance.

Inputs are sampled away from the non-differentiable points they would
otherwise straddle (spline knots for the input gradient, the ReLU kink, the
BCE clamp edges); the objective is sum(upstream * output) with a fixed random
upstream, which makes the chain rule through each layer explicit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import layers, training
from .layers import (
    BatchNormLayer,
    DenseLayer,
    DropoutLayer,
    KanLinearLayer,
    batchnorm_backward,
    batchnorm_forward,
    dense_backward,
    dense_forward,
    kan_backward,
    kan_forward,
    relu,
    sigmoid,
    silu,
    silu_grad,
)
from .numerics import SeededRng, finite_difference_gradient
from .spline import build_grid

DEFAULT_TOLERANCE = 1e-5
FD_STEP = 1e-5


@dataclass(frozen=True)
class CheckResult:
    component: str
    worst_rel_err: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.worst_rel_err < self.tolerance


def rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Norm-relative disagreement, guarded for the all-zero case."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    b = np.asarray(numeric, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def _away_from(values: np.ndarray, points: np.ndarray, margin: float, rng: SeededRng) -> np.ndarray:
    """Resample coordinates that sit within `margin` of any point in `points`."""
    flat = values.ravel()
    for _ in range(100):
        near = np.min(np.abs(flat[:, None] - points[None, :]), axis=1) < margin
        if not near.any():
            break
        flat[near] = rng.uniform(int(near.sum())) * 2.0 - 1.0
    return flat.reshape(values.shape)


def _check_kan(rng: SeededRng, instances: int) -> float:
    worst = 0.0
    for _ in range(instances):
        in_dim = int(rng.integer_below(3)) + 2
        out_dim = int(rng.integer_below(3)) + 1
        grid_size = int(rng.integer_below(4)) + 3
        order = int(rng.integer_below(3)) + 1
        grid = build_grid(grid_size, order, -1.0, 1.0)
        layer = KanLinearLayer.initialized(in_dim, out_dim, grid, rng)
        batch = int(rng.integer_below(4)) + 2
        x = (rng.uniform(batch * in_dim) * 2.0 - 1.0).reshape(batch, in_dim)
        x = _away_from(x, grid.knots, 4 * FD_STEP, rng)
        upstream = rng.normal(batch * out_dim).reshape(batch, out_dim)
        grads = kan_backward(layer, x, upstream)

        def loss_with_base(vec, layer=layer, x=x, upstream=upstream):
            trial = KanLinearLayer(
                layer.in_dim, layer.out_dim, layer.grid,
                vec.reshape(layer.base_weight.shape), layer.spline_weight,
            )
            return float((upstream * kan_forward(trial, x)).sum())

        def loss_with_spline(vec, layer=layer, x=x, upstream=upstream):
            trial = KanLinearLayer(
                layer.in_dim, layer.out_dim, layer.grid,
                layer.base_weight, vec.reshape(layer.spline_weight.shape),
            )
            return float((upstream * kan_forward(trial, x)).sum())

        def loss_with_input(vec, layer=layer, x=x, upstream=upstream):
            return float((upstream * kan_forward(layer, vec.reshape(x.shape))).sum())

        worst = max(
            worst,
            rel_err(grads.base_weight, finite_difference_gradient(loss_with_base, layer.base_weight.ravel(), FD_STEP)),
            rel_err(grads.spline_weight, finite_difference_gradient(loss_with_spline, layer.spline_weight.ravel(), FD_STEP)),
            rel_err(grads.x, finite_difference_gradient(loss_with_input, x.ravel(), FD_STEP)),
        )
    return worst


def _check_dense(rng: SeededRng, instances: int) -> float:
    worst = 0.0
    for _ in range(instances):
        in_dim = int(rng.integer_below(5)) + 1
        out_dim = int(rng.integer_below(5)) + 1
        batch = int(rng.integer_below(5)) + 1
        layer = DenseLayer.initialized(in_dim, out_dim, rng)
        x = rng.normal(batch * in_dim).reshape(batch, in_dim)
        upstream = rng.normal(batch * out_dim).reshape(batch, out_dim)
        grads = dense_backward(layer, x, upstream)

        def loss_with_params(vec, layer=layer, x=x, upstream=upstream):
            nw = layer.weight.size
            trial = DenseLayer(vec[:nw].reshape(layer.weight.shape), vec[nw:])
            return float((upstream * dense_forward(trial, x)).sum())

        def loss_with_input(vec, layer=layer, x=x, upstream=upstream):
            return float((upstream * dense_forward(layer, vec.reshape(x.shape))).sum())

        packed = np.concatenate([layer.weight.ravel(), layer.bias])
        fd = finite_difference_gradient(loss_with_params, packed, FD_STEP)
        analytic = np.concatenate([grads.weight.ravel(), grads.bias])
        worst = max(
            worst,
            rel_err(analytic, fd),
            rel_err(grads.x, finite_difference_gradient(loss_with_input, x.ravel(), FD_STEP)),
        )
    return worst


def _check_batchnorm(rng: SeededRng, instances: int) -> float:
    worst = 0.0
    for _ in range(instances):
        dim = int(rng.integer_below(4)) + 1
        batch = int(rng.integer_below(5)) + 3
        gamma = rng.normal(dim, 1.0, 0.3)
        beta = rng.normal(dim, 0.0, 0.3)
        x = rng.normal(batch * dim).reshape(batch, dim)
        upstream = rng.normal(batch * dim).reshape(batch, dim)
        layer = BatchNormLayer.initialized(dim)
        layer.gamma, layer.beta = gamma.copy(), beta.copy()
        grads = batchnorm_backward(layer, x, upstream)

        def loss_with_params(vec, dim=dim, x=x, upstream=upstream):
            trial = BatchNormLayer.initialized(dim)
            trial.gamma, trial.beta = vec[:dim].copy(), vec[dim:].copy()
            return float((upstream * batchnorm_forward(trial, x, layers.TRAIN)).sum())

        def loss_with_input(vec, layer=layer, x=x, upstream=upstream):
            trial = BatchNormLayer.initialized(layer.gamma.size)
            trial.gamma, trial.beta = layer.gamma.copy(), layer.beta.copy()
            return float((upstream * batchnorm_forward(trial, vec.reshape(x.shape), layers.TRAIN)).sum())

        fd = finite_difference_gradient(loss_with_params, np.concatenate([gamma, beta]), FD_STEP)
        worst = max(
            worst,
            rel_err(np.concatenate([grads.gamma, grads.beta]), fd),
            rel_err(grads.x, finite_difference_gradient(loss_with_input, x.ravel(), FD_STEP)),
        )
    return worst


def _check_dropout(rng: SeededRng, instances: int) -> float:
    worst = 0.0
    for _ in range(instances):
        shape = (int(rng.integer_below(4)) + 2, int(rng.integer_below(4)) + 1)
        layer = DropoutLayer(0.5)
        x = rng.normal(shape[0] * shape[1]).reshape(shape)
        upstream = rng.normal(x.size).reshape(shape)
        _, mask = layers.dropout_forward(layer, x, rng, layers.TRAIN)
        analytic = layers.dropout_backward(layer, upstream, mask)

        def loss_with_input(vec, layer=layer, mask=mask, upstream=upstream, shape=shape):
            out = vec.reshape(shape) * mask / (1.0 - layer.rate)
            return float((upstream * out).sum())

        worst = max(worst, rel_err(analytic, finite_difference_gradient(loss_with_input, x.ravel(), FD_STEP)))
    return worst


def _check_activations(rng: SeededRng, instances: int) -> float:
    worst = 0.0
    for _ in range(instances):
        n = int(rng.integer_below(8)) + 2
        x = rng.normal(n, 0.0, 2.0)
        x = _away_from(x, np.zeros(1), 4 * FD_STEP, rng)  # keep off the ReLU kink
        upstream = rng.normal(n)
        pairs = [
            (silu, lambda v: upstream * silu_grad(v)),
            (sigmoid, lambda v: upstream * sigmoid(v) * (1.0 - sigmoid(v))),
            (relu, lambda v: upstream * (v > 0)),
        ]
        for fwd, grad_fn in pairs:
            def loss(vec, fwd=fwd):
                return float((upstream * fwd(vec)).sum())

            worst = max(worst, rel_err(grad_fn(x), finite_difference_gradient(loss, x, FD_STEP)))
    return worst


def _check_bce(rng: SeededRng, instances: int) -> float:
    worst = 0.0
    for _ in range(instances):
        n = int(rng.integer_below(8)) + 2
        p = 0.02 + 0.96 * rng.uniform(n)  # strictly inside the clamp
        y = (rng.uniform(n) < 0.5).astype(np.int64)
        _, grad = training.bce_loss(p, y)

        def loss(vec, y=y):
            return training.bce_loss(vec, y)[0]

        worst = max(worst, rel_err(grad, finite_difference_gradient(loss, p, FD_STEP)))
    return worst


def _check_nll_softmax(rng: SeededRng, instances: int) -> float:
    worst = 0.0
    for _ in range(instances):
        n = int(rng.integer_below(8)) + 2
        logits = rng.normal(2 * n, 0.0, 2.0).reshape(n, 2)
        y = (rng.uniform(n) < 0.5).astype(np.int64)
        probs = layers.softmax_rows(logits)
        _, grad = training.nll_softmax_loss(probs, y)

        def loss(vec, y=y, n=n):
            return training.nll_softmax_loss(layers.softmax_rows(vec.reshape(n, 2)), y)[0]

        worst = max(worst, rel_err(grad, finite_difference_gradient(loss, logits.ravel(), FD_STEP)))
    return worst


def _check_injected_fault(rng: SeededRng, instances: int) -> float:
    """Self-test: a deliberately sign-flipped dense backward must be caught."""
    worst = 0.0
    for _ in range(instances):
        layer = DenseLayer.initialized(3, 2, rng)
        x = rng.normal(6).reshape(2, 3)
        upstream = rng.normal(4).reshape(2, 2)
        broken = -dense_backward(layer, x, upstream).x  # wrong sign on purpose

        def loss(vec, layer=layer, upstream=upstream, x=x):
            return float((upstream * dense_forward(layer, vec.reshape(x.shape))).sum())

        worst = max(worst, rel_err(broken, finite_difference_gradient(loss, x.ravel(), FD_STEP)))
    return worst


_COMPONENTS = [
    ("kan_linear", _check_kan),
    ("dense", _check_dense),
    ("batchnorm", _check_batchnorm),
    ("dropout", _check_dropout),
    ("activations", _check_activations),
    ("bce_loss", _check_bce),
    ("nll_softmax_loss", _check_nll_softmax),
]


def run_all(seed: int = 0, instances: int = 20, tolerance: float = DEFAULT_TOLERANCE, inject_fault: bool = False) -> list[CheckResult]:
    checks = list(_COMPONENTS)
    if inject_fault:
        checks.append(("fault_injection_selftest", _check_injected_fault))
    results = []
    for name, fn in checks:
        worst = fn(SeededRng(seed), instances)
        results.append(CheckResult(name, worst, tolerance))
    return results
