"""Layer primitives with hand-derived gradients.

Each layer exposes a forward function and a backward function that maps
(layer, input, upstream gradient) to parameter gradients plus the gradient
w.r.t. the input.  No autodiff tape: every backward here is checked against
central finite differences in the test suite and in `kandet gradcheck`.

Matrix convention: activations are [batch x features]; weights are
[out x in] so a dense map is x @ W.T + b.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import SeededRng, ShapeError
from .spline import SplineGrid, basis_and_derivative, basis_matrix


class BatchSizeError(ValueError):
    """Train-mode batch statistics need at least two rows."""


TRAIN = "train"
EVAL = "eval"


def _check_mode(mode: str) -> str:
    if mode not in (TRAIN, EVAL):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    return mode


# ---------------------------------------------------------------------------
# activations

def sigmoid(x) -> np.ndarray:
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=np.float64)
    ez = np.exp(-np.abs(x))  # exp of a non-positive number never overflows
    return np.where(x >= 0, 1.0 / (1.0 + ez), ez / (1.0 + ez))


def silu(x) -> np.ndarray:
    """x * sigmoid(x), the SiLU activation used on the KAN base path."""
    x = np.asarray(x, dtype=np.float64)
    return x * sigmoid(x)


def silu_grad(x) -> np.ndarray:
    s = sigmoid(x)
    return s * (1.0 + np.asarray(x, dtype=np.float64) * (1.0 - s))


def relu(x) -> np.ndarray:
    return np.maximum(0.0, np.asarray(x, dtype=np.float64))


def softmax_rows(x) -> np.ndarray:
    """Row-wise softmax with max subtraction for overflow safety."""
    x = np.asarray(x, dtype=np.float64)
    z = x - x.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# KAN linear layer

@dataclass
class KanLinearLayer:
    """Linear base path through SiLU plus a per-edge spline path.

    base_weight is [out x in]; spline_weight is [out x in x basis_count] and
    holds the collapsed product of the outer weights and the per-basis spline
    coefficients (one tensor is observationally equivalent).
    """

    in_dim: int
    out_dim: int
    grid: SplineGrid
    base_weight: np.ndarray
    spline_weight: np.ndarray

    @classmethod
    def initialized(cls, in_dim: int, out_dim: int, grid: SplineGrid, rng: SeededRng) -> "KanLinearLayer":
        bound = 1.0 / np.sqrt(in_dim)
        base = (rng.uniform(out_dim * in_dim) * 2.0 - 1.0).reshape(out_dim, in_dim) * bound
        nb = grid.basis_count
        spl = rng.normal(out_dim * in_dim * nb, 0.0, 0.1 / np.sqrt(nb)).reshape(out_dim, in_dim, nb)
        return cls(in_dim, out_dim, grid, base, spl)


@dataclass
class KanGradients:
    base_weight: np.ndarray
    spline_weight: np.ndarray
    x: np.ndarray


def _kan_check(layer: KanLinearLayer, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != layer.in_dim:
        raise ShapeError(f"kan input must be [batch x {layer.in_dim}], got {x.shape}")
    return x


def kan_apply(layer: KanLinearLayer, x: np.ndarray, bases: np.ndarray) -> np.ndarray:
    """Forward given precomputed basis rows (training fast path)."""
    batch = x.shape[0]
    nb = layer.grid.basis_count
    base_out = silu(x) @ layer.base_weight.T
    spline_out = bases.reshape(batch, layer.in_dim * nb) @ layer.spline_weight.reshape(layer.out_dim, -1).T
    return base_out + spline_out


def kan_forward(layer: KanLinearLayer, x) -> np.ndarray:
    """out[b,o] = sum_i base[o,i]*SiLU(x[b,i]) + sum_ij spline[o,i,j]*B_j(x[b,i])."""
    x = _kan_check(layer, x)
    return kan_apply(layer, x, basis_matrix(layer.grid, x))


def kan_gradients(
    layer: KanLinearLayer,
    x: np.ndarray,
    upstream: np.ndarray,
    bases: np.ndarray,
    dbases: np.ndarray,
) -> KanGradients:
    """Backward given precomputed bases and their input derivatives."""
    batch = x.shape[0]
    nb = layer.grid.basis_count
    d_base = upstream.T @ silu(x)
    d_spline = (upstream.T @ bases.reshape(batch, layer.in_dim * nb)).reshape(
        layer.out_dim, layer.in_dim, nb
    )
    # input gradient: SiLU chain on the base path, analytic B' on the spline path
    dx = (upstream @ layer.base_weight) * silu_grad(x)
    per_edge = (upstream @ layer.spline_weight.reshape(layer.out_dim, -1)).reshape(
        batch, layer.in_dim, nb
    )
    dx += (per_edge * dbases).sum(axis=-1)
    return KanGradients(d_base, d_spline, dx)


def kan_backward(layer: KanLinearLayer, x, upstream) -> KanGradients:
    x = _kan_check(layer, x)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (x.shape[0], layer.out_dim):
        raise ShapeError(
            f"upstream must be [{x.shape[0]} x {layer.out_dim}], got {upstream.shape}"
        )
    bases, dbases = basis_and_derivative(layer.grid, x)
    return kan_gradients(layer, x, upstream, bases, dbases)


# ---------------------------------------------------------------------------
# dense layer

@dataclass
class DenseLayer:
    weight: np.ndarray  # [out x in]
    bias: np.ndarray  # [out]

    @classmethod
    def initialized(cls, in_dim: int, out_dim: int, rng: SeededRng) -> "DenseLayer":
        bound = 1.0 / np.sqrt(in_dim)
        w = (rng.uniform(out_dim * in_dim) * 2.0 - 1.0).reshape(out_dim, in_dim) * bound
        return cls(w, np.zeros(out_dim, dtype=np.float64))


@dataclass
class DenseGradients:
    weight: np.ndarray
    bias: np.ndarray
    x: np.ndarray


def dense_forward(layer: DenseLayer, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != layer.weight.shape[1]:
        raise ShapeError(f"dense input must be [batch x {layer.weight.shape[1]}], got {x.shape}")
    return x @ layer.weight.T + layer.bias


def dense_backward(layer: DenseLayer, x, upstream) -> DenseGradients:
    x = np.asarray(x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (x.shape[0], layer.weight.shape[0]):
        raise ShapeError(
            f"upstream must be [{x.shape[0]} x {layer.weight.shape[0]}], got {upstream.shape}"
        )
    return DenseGradients(upstream.T @ x, upstream.sum(axis=0), upstream @ layer.weight)


# ---------------------------------------------------------------------------
# batch normalization

@dataclass
class BatchNormLayer:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    stability_eps: float = 1e-5

    @classmethod
    def initialized(cls, dim: int, momentum: float = 0.1, stability_eps: float = 1e-5) -> "BatchNormLayer":
        return cls(
            gamma=np.ones(dim, dtype=np.float64),
            beta=np.zeros(dim, dtype=np.float64),
            running_mean=np.zeros(dim, dtype=np.float64),
            running_var=np.ones(dim, dtype=np.float64),
            momentum=momentum,
            stability_eps=stability_eps,
        )


@dataclass
class BatchNormGradients:
    gamma: np.ndarray
    beta: np.ndarray
    x: np.ndarray


def batchnorm_forward(layer: BatchNormLayer, x, mode: str) -> np.ndarray:
    """Train mode normalizes with biased batch statistics and updates the
    running buffers (unbiased variance); eval mode uses the running buffers.
    """
    _check_mode(mode)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != layer.gamma.shape[0]:
        raise ShapeError(f"batchnorm input must be [batch x {layer.gamma.shape[0]}], got {x.shape}")
    if mode == TRAIN:
        n = x.shape[0]
        if n < 2:
            raise BatchSizeError(f"train-mode batch norm needs batch >= 2, got {n}")
        mean = x.mean(axis=0)
        var = x.var(axis=0)  # biased
        m = layer.momentum
        layer.running_mean = (1.0 - m) * layer.running_mean + m * mean
        layer.running_var = (1.0 - m) * layer.running_var + m * var * n / (n - 1)
    else:
        mean = layer.running_mean
        var = layer.running_var
    xhat = (x - mean) / np.sqrt(var + layer.stability_eps)
    return layer.gamma * xhat + layer.beta


def batchnorm_backward(layer: BatchNormLayer, x, upstream) -> BatchNormGradients:
    """Gradients for train-mode batch norm (the only mode that trains)."""
    x = np.asarray(x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    n = x.shape[0]
    if n < 2:
        raise BatchSizeError(f"train-mode batch norm needs batch >= 2, got {n}")
    mean = x.mean(axis=0)
    var = x.var(axis=0)
    inv_std = 1.0 / np.sqrt(var + layer.stability_eps)
    xhat = (x - mean) * inv_std
    d_gamma = (upstream * xhat).sum(axis=0)
    d_beta = upstream.sum(axis=0)
    dx = (layer.gamma * inv_std / n) * (
        n * upstream - upstream.sum(axis=0) - xhat * (upstream * xhat).sum(axis=0)
    )
    return BatchNormGradients(d_gamma, d_beta, dx)


# ---------------------------------------------------------------------------
# dropout

@dataclass
class DropoutLayer:
    rate: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {self.rate}")


def dropout_forward(layer: DropoutLayer, x, rng: SeededRng | None, mode: str) -> tuple[np.ndarray, np.ndarray]:
    """Inverted dropout: train mode zeroes entries with probability `rate`
    and scales survivors by 1/(1-rate); eval mode is the identity.

    Returns (output, mask); the mask is all-ones in eval mode.
    """
    _check_mode(mode)
    x = np.asarray(x, dtype=np.float64)
    if mode == EVAL:
        return x, np.ones_like(x)
    if rng is None:
        raise ValueError("train-mode dropout needs an rng")
    u = rng.uniform(x.size).reshape(x.shape)
    mask = (u >= layer.rate).astype(np.float64)
    return x * mask / (1.0 - layer.rate), mask


def dropout_backward(layer: DropoutLayer, upstream, mask) -> np.ndarray:
    return np.asarray(upstream, dtype=np.float64) * mask / (1.0 - layer.rate)
