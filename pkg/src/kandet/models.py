"""The two classifier architectures and their serialization.

HybridKanMlp: KANLinear(in -> h1) -> BatchNorm -> Dropout(0.5)
              -> Dense(h1 -> h2) + ReLU -> Dense(h2 -> 1) + sigmoid.
BaselineMlp:  dense stack with ReLU between layers and a softmax head
              (two classes).

Label convention everywhere: real = 0 (negative), generated = 1 (positive).

Parameter files are binary: magic "KANM", format version u16, a
length-prefixed architecture tag, a hyperparameter block, then the parameter
blocks as little-endian float64 in the order listed by `parameter_blocks`
(plus the batch-norm running buffers for the hybrid).  Round-trips are
bit-exact.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import layers
from .layers import (
    BatchNormLayer,
    DenseLayer,
    DropoutLayer,
    KanLinearLayer,
    batchnorm_backward,
    batchnorm_forward,
    dense_backward,
    dense_forward,
    dropout_backward,
    dropout_forward,
    kan_apply,
    kan_gradients,
    relu,
    sigmoid,
    softmax_rows,
)
from .numerics import SeededRng, ShapeError
from .spline import basis_and_derivative, basis_matrix, build_grid

REAL = 0
GENERATED = 1

FORMAT_MAGIC = b"KANM"
FORMAT_VERSION = 1

_ARCH_HYBRID = "hybrid-kan-mlp"
_ARCH_BASELINE = "baseline-mlp"


class ModelFormatError(ValueError):
    """Malformed or truncated parameter payload."""


class ArchitectureError(ValueError):
    """Unknown or mismatched architecture tag."""


# ---------------------------------------------------------------------------
# hybrid KAN-MLP

@dataclass
class HybridKanMlp:
    kan: KanLinearLayer
    bn: BatchNormLayer
    drop: DropoutLayer
    fc1: DenseLayer
    head: DenseLayer

    @property
    def in_dim(self) -> int:
        return self.kan.in_dim

    @classmethod
    def initialized(
        cls,
        rng: SeededRng,
        in_dim: int = 512,
        hidden1: int = 128,
        hidden2: int = 64,
        grid_size: int = 10,
        spline_order: int = 3,
        dropout_rate: float = 0.5,
    ) -> "HybridKanMlp":
        grid = build_grid(grid_size, spline_order, -1.0, 1.0)
        return cls(
            kan=KanLinearLayer.initialized(in_dim, hidden1, grid, rng),
            bn=BatchNormLayer.initialized(hidden1),
            drop=DropoutLayer(dropout_rate),
            fc1=DenseLayer.initialized(hidden1, hidden2, rng),
            head=DenseLayer.initialized(hidden2, 1, rng),
        )


def hybrid_forward(model: HybridKanMlp, x, mode: str = layers.EVAL, rng: SeededRng | None = None) -> np.ndarray:
    """Probabilities [batch x 1], strictly inside (0, 1).

    Eval mode is deterministic (running-stat batch norm, identity dropout)
    and accepts any batch size, including a single row on a model whose
    batch norm has only its initialized running stats.
    """
    p, _ = _hybrid_forward_cached(model, x, mode, rng)
    return p


def _hybrid_forward_cached(model: HybridKanMlp, x, mode: str, rng: SeededRng | None):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.kan.in_dim:
        raise ShapeError(f"hybrid input must be [batch x {model.kan.in_dim}], got {x.shape}")
    if mode == layers.TRAIN:
        bases, dbases = basis_and_derivative(model.kan.grid, x)
    else:
        bases, dbases = basis_matrix(model.kan.grid, x), None
    kan_out = kan_apply(model.kan, x, bases)
    bn_out = batchnorm_forward(model.bn, kan_out, mode)
    drop_out, mask = dropout_forward(model.drop, bn_out, rng, mode)
    z1 = dense_forward(model.fc1, drop_out)
    h1 = relu(z1)
    z2 = dense_forward(model.head, h1)
    p = sigmoid(z2)
    cache = {
        "x": x,
        "bases": bases,
        "dbases": dbases,
        "kan_out": kan_out,
        "bn_out": bn_out,
        "drop_out": drop_out,
        "mask": mask,
        "z1": z1,
        "h1": h1,
        "p": p,
    }
    return p, cache


def hybrid_backward(model: HybridKanMlp, cache: dict, d_prob: np.ndarray) -> list[np.ndarray]:
    """Gradients in `parameter_blocks` order, given dL/dprob from the loss."""
    p = cache["p"]
    d_z2 = d_prob * p * (1.0 - p)
    g_head = dense_backward(model.head, cache["h1"], d_z2)
    d_z1 = g_head.x * (cache["z1"] > 0)
    g_fc1 = dense_backward(model.fc1, cache["drop_out"], d_z1)
    d_bn_out = dropout_backward(model.drop, g_fc1.x, cache["mask"])
    g_bn = batchnorm_backward(model.bn, cache["kan_out"], d_bn_out)
    g_kan = kan_gradients(model.kan, cache["x"], g_bn.x, cache["bases"], cache["dbases"])
    return [
        g_kan.base_weight,
        g_kan.spline_weight,
        g_bn.gamma,
        g_bn.beta,
        g_fc1.weight,
        g_fc1.bias,
        g_head.weight,
        g_head.bias,
    ]


# ---------------------------------------------------------------------------
# baseline MLP

@dataclass
class BaselineMlp:
    stack: list[DenseLayer]  # ReLU between layers, softmax on the last

    @property
    def in_dim(self) -> int:
        return self.stack[0].weight.shape[1]

    @classmethod
    def initialized(cls, rng: SeededRng, layer_dims: tuple[int, ...] = (512, 256, 128, 2)) -> "BaselineMlp":
        if len(layer_dims) < 2:
            raise ValueError(f"need at least input and output dims, got {layer_dims}")
        if layer_dims[-1] != 2:
            raise ValueError(f"baseline head must have two classes, got {layer_dims[-1]}")
        dims = list(layer_dims)
        stack = [DenseLayer.initialized(a, b, rng) for a, b in zip(dims, dims[1:])]
        return cls(stack)


def baseline_forward(model: BaselineMlp, x, mode: str = layers.EVAL) -> np.ndarray:
    """Class probabilities [batch x 2]; rows sum to one."""
    p, _ = _baseline_forward_cached(model, x, mode)
    return p


def _baseline_forward_cached(model: BaselineMlp, x, mode: str):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.in_dim:
        raise ShapeError(f"baseline input must be [batch x {model.in_dim}], got {x.shape}")
    pre, post = [], [x]
    h = x
    for layer in model.stack[:-1]:
        z = dense_forward(layer, h)
        h = relu(z)
        pre.append(z)
        post.append(h)
    logits = dense_forward(model.stack[-1], h)
    probs = softmax_rows(logits)
    return probs, {"pre": pre, "post": post, "probs": probs}


def baseline_backward(model: BaselineMlp, cache: dict, d_logits: np.ndarray) -> list[np.ndarray]:
    """Gradients in `parameter_blocks` order, given dL/dlogits."""
    grads: list[np.ndarray] = []
    g = dense_backward(model.stack[-1], cache["post"][-1], d_logits)
    grads[:0] = [g.weight, g.bias]
    d_h = g.x
    for i in range(len(model.stack) - 2, -1, -1):
        d_z = d_h * (cache["pre"][i] > 0)
        g = dense_backward(model.stack[i], cache["post"][i], d_z)
        grads[:0] = [g.weight, g.bias]
        d_h = g.x
    return grads


# ---------------------------------------------------------------------------
# shared surface

Model = HybridKanMlp | BaselineMlp


def predict_label(probabilities, threshold: float = 0.5) -> np.ndarray:
    """Decision rule: generated (1) iff p >= threshold for single-probability
    outputs; argmax with ties going to generated for two-column outputs.
    """
    p = np.asarray(probabilities, dtype=np.float64)
    if p.ndim == 2 and p.shape[1] == 2:
        return (p[:, 1] >= p[:, 0]).astype(np.int64)
    return (p.ravel() >= threshold).astype(np.int64)


def parameter_blocks(model: Model) -> list[tuple[str, np.ndarray]]:
    """Named trainable arrays in serialization order."""
    if isinstance(model, HybridKanMlp):
        return [
            ("kan.base_weight", model.kan.base_weight),
            ("kan.spline_weight", model.kan.spline_weight),
            ("bn.gamma", model.bn.gamma),
            ("bn.beta", model.bn.beta),
            ("fc1.weight", model.fc1.weight),
            ("fc1.bias", model.fc1.bias),
            ("head.weight", model.head.weight),
            ("head.bias", model.head.bias),
        ]
    if isinstance(model, BaselineMlp):
        blocks = []
        for i, layer in enumerate(model.stack):
            blocks.append((f"stack.{i}.weight", layer.weight))
            blocks.append((f"stack.{i}.bias", layer.bias))
        return blocks
    raise ArchitectureError(f"unknown model type {type(model).__name__}")


def set_parameter_blocks(model: Model, arrays: list[np.ndarray]) -> None:
    """Overwrite trainable arrays (shapes must match `parameter_blocks`)."""
    blocks = parameter_blocks(model)
    if len(arrays) != len(blocks):
        raise ShapeError(f"expected {len(blocks)} blocks, got {len(arrays)}")
    for (_, dst), src in zip(blocks, arrays):
        if dst.shape != src.shape:
            raise ShapeError(f"block shape mismatch: {dst.shape} vs {src.shape}")
        dst[...] = src


def parameter_count(model: Model) -> int:
    """Exact number of trainable scalars."""
    return sum(arr.size for _, arr in parameter_blocks(model))


def forward(model: Model, x, mode: str = layers.EVAL, rng: SeededRng | None = None) -> np.ndarray:
    if isinstance(model, HybridKanMlp):
        return hybrid_forward(model, x, mode, rng)
    if isinstance(model, BaselineMlp):
        return baseline_forward(model, x, mode)
    raise ArchitectureError(f"unknown model type {type(model).__name__}")


def generated_probability(model: Model, x, mode: str = layers.EVAL, rng: SeededRng | None = None) -> np.ndarray:
    """Probability of the generated class as a flat vector, either head."""
    p = forward(model, x, mode, rng)
    if p.ndim == 2 and p.shape[1] == 2:
        return p[:, 1]
    return p.ravel()


# ---------------------------------------------------------------------------
# serialization

def _pack_str(s: str) -> bytes:
    raw = s.encode("ascii")
    return struct.pack("<B", len(raw)) + raw


def save_params(model: Model) -> bytes:
    out = [FORMAT_MAGIC, struct.pack("<H", FORMAT_VERSION)]
    if isinstance(model, HybridKanMlp):
        out.append(_pack_str(_ARCH_HYBRID))
        g = model.kan.grid
        out.append(
            struct.pack(
                "<IIIII",
                model.kan.in_dim,
                model.kan.out_dim,
                model.fc1.weight.shape[0],
                g.grid_size,
                g.order,
            )
        )
        out.append(struct.pack("<ddd", model.drop.rate, model.bn.momentum, model.bn.stability_eps))
        arrays = [arr for _, arr in parameter_blocks(model)]
        arrays += [model.bn.running_mean, model.bn.running_var]
    elif isinstance(model, BaselineMlp):
        out.append(_pack_str(_ARCH_BASELINE))
        dims = [model.in_dim] + [layer.weight.shape[0] for layer in model.stack]
        out.append(struct.pack("<I", len(dims)))
        out.append(struct.pack(f"<{len(dims)}I", *dims))
        arrays = [arr for _, arr in parameter_blocks(model)]
    else:
        raise ArchitectureError(f"unknown model type {type(model).__name__}")
    for arr in arrays:
        out.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ModelFormatError(
                f"truncated payload: wanted {n} bytes at offset {self.pos}, have {len(self.data) - self.pos}"
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def array(self, shape: tuple[int, ...]) -> np.ndarray:
        n = int(np.prod(shape, dtype=np.int64))
        return np.frombuffer(self.take(8 * n), dtype="<f8").astype(np.float64).reshape(shape)


def load_params(data: bytes, expect_arch: str | None = None) -> Model:
    """Rebuild a model from `save_params` output, bit-exactly.

    expect_arch, when given ("hybrid" or "baseline"), makes a
    cross-architecture payload an ArchitectureError instead of silently
    returning the other model kind.
    """
    r = _Reader(data)
    if r.take(4) != FORMAT_MAGIC:
        raise ModelFormatError("bad magic: not a model parameter file")
    (version,) = r.unpack("<H")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported format version {version} (have {FORMAT_VERSION})")
    (tag_len,) = r.unpack("<B")
    tag = r.take(tag_len).decode("ascii", errors="replace")
    if tag == _ARCH_HYBRID:
        if expect_arch not in (None, "hybrid"):
            raise ArchitectureError(f"expected a {expect_arch} model, file holds {tag}")
        in_dim, h1, h2, grid_size, order = r.unpack("<IIIII")
        rate, momentum, eps = r.unpack("<ddd")
        grid = build_grid(grid_size, order, -1.0, 1.0)
        nb = grid.basis_count
        # blocks appear in parameter_blocks order, then the running buffers
        base_w = r.array((h1, in_dim))
        spline_w = r.array((h1, in_dim, nb))
        gamma = r.array((h1,))
        beta = r.array((h1,))
        fc1_w = r.array((h2, h1))
        fc1_b = r.array((h2,))
        head_w = r.array((1, h2))
        head_b = r.array((1,))
        running_mean = r.array((h1,))
        running_var = r.array((h1,))
        model = HybridKanMlp(
            kan=KanLinearLayer(in_dim, h1, grid, base_w, spline_w),
            bn=BatchNormLayer(gamma, beta, running_mean, running_var, momentum, eps),
            drop=DropoutLayer(rate),
            fc1=DenseLayer(fc1_w, fc1_b),
            head=DenseLayer(head_w, head_b),
        )
    elif tag == _ARCH_BASELINE:
        if expect_arch not in (None, "baseline"):
            raise ArchitectureError(f"expected a {expect_arch} model, file holds {tag}")
        (ndims,) = r.unpack("<I")
        dims = list(r.unpack(f"<{ndims}I"))
        stack = []
        for a, b in zip(dims, dims[1:]):
            w = r.array((b, a))
            bias = r.array((b,))
            stack.append(DenseLayer(w, bias))
        model = BaselineMlp(stack)
    else:
        raise ArchitectureError(f"unknown architecture tag {tag!r}")
    if r.pos != len(data):
        raise ModelFormatError(f"trailing bytes after parameters at offset {r.pos}")
    return model


def save_params_file(model: Model, path) -> None:
    with open(path, "wb") as fh:
        fh.write(save_params(model))


def load_params_file(path, expect_arch: str | None = None) -> Model:
    with open(path, "rb") as fh:
        return load_params(fh.read(), expect_arch)
