"""Uniform B-spline grids and basis evaluation (Cox-de Boor recursion).

A grid of size G on [range_min, range_max] with spline order k carries
G + 2k + 1 knots: the G + 1 uniform interior points padded by k extra knots
of the same spacing on each side, so the order-k basis is well defined on the
whole interval.  That yields G + k basis functions; on the interior they are
non-negative, have local support (at most k + 1 nonzero at any point), and
sum to one.

Inputs are clamped to [range_min, range_max] before evaluation: embeddings
are unit-norm so every coordinate already lies in [-1, 1], and the clamp only
guards pathological data.  Exact-knot ties resolve to the right-hand piece,
except the right boundary which belongs to the last cell, so the partition of
unity holds on the closed interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class GridError(ValueError):
    """Invalid grid construction parameters."""


class SplineInputError(ValueError):
    """Non-finite input handed to basis evaluation."""


@dataclass(frozen=True)
class SplineGrid:
    grid_size: int
    order: int
    range_min: float
    range_max: float
    epsilon: float
    knots: np.ndarray  # strictly increasing, length grid_size + 2*order + 1

    @property
    def basis_count(self) -> int:
        return self.grid_size + self.order


def build_grid(grid_size: int, order: int, range_min: float = -1.0, range_max: float = 1.0) -> SplineGrid:
    """Uniform knot grid with symmetric padding of `order` knots per side.

    epsilon is the uniform spacing (range_max - range_min) / grid_size, which
    equals the minimum grid step, and is also the padding spacing.
    """
    if grid_size < 1:
        raise GridError(f"grid_size must be >= 1, got {grid_size}")
    if order < 0:
        raise GridError(f"order must be >= 0, got {order}")
    if not (range_min < range_max):
        raise GridError(f"range must satisfy range_min < range_max, got [{range_min}, {range_max}]")
    epsilon = (range_max - range_min) / grid_size
    knots = range_min + np.arange(-order, grid_size + order + 1, dtype=np.float64) * epsilon
    return SplineGrid(grid_size, order, float(range_min), float(range_max), float(epsilon), knots)


def _order_zero(grid: SplineGrid, u: np.ndarray) -> np.ndarray:
    # Half-open cells [t_i, t_{i+1}); the very last cell is closed on the
    # right so order-0 grids cover range_max.
    t = grid.knots
    b = ((u >= t[:-1]) & (u < t[1:])).astype(np.float64)
    b[..., -1] = np.where((u[..., 0] >= t[-2]) & (u[..., 0] <= t[-1]), 1.0, b[..., -1])
    return b


def _bases_upto(grid: SplineGrid, x: np.ndarray, order: int) -> np.ndarray:
    """Cox-de Boor recursion on clamped inputs, x of any shape."""
    u = x[..., None]
    t = grid.knots
    b = _order_zero(grid, u)
    for k in range(1, order + 1):
        left = (u - t[: -(k + 1)]) / (t[k:-1] - t[: -(k + 1)]) * b[..., :-1]
        right = (t[k + 1 :] - u) / (t[k + 1 :] - t[1:-k]) * b[..., 1:]
        b = left + right
    return b


def _clamp(grid: SplineGrid, x: np.ndarray) -> np.ndarray:
    return np.clip(x, grid.range_min, grid.range_max)


def basis_at(grid: SplineGrid, x: float) -> np.ndarray:
    """Basis row at a scalar input: grid.basis_count values."""
    if not math.isfinite(x):
        raise SplineInputError(f"basis input must be finite, got {x}")
    xc = _clamp(grid, np.asarray([x], dtype=np.float64))
    return _bases_upto(grid, xc, grid.order)[0]

def basis_matrix(grid: SplineGrid, xs) -> np.ndarray:
    """Basis rows for every scalar coordinate of a [batch x dim] matrix.

    Returns a [batch x dim x basis_count] array.  Non-finite entries raise
    SplineInputError naming the offending (row, col).
    """
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2:
        raise SplineInputError(f"expected a 2-D input matrix, got ndim={xs.ndim}")
    bad = ~np.isfinite(xs)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise SplineInputError(f"basis input must be finite, got {xs[r, c]} at (row={r}, col={c})")
    return _bases_upto(grid, _clamp(grid, xs), grid.order)


def basis_and_derivative(grid: SplineGrid, xs) -> tuple[np.ndarray, np.ndarray]:
    """Basis rows plus their analytic derivatives w.r.t. the input.

    The derivative uses the standard recursion
        B'_{i,k}(x) = k * (B_{i,k-1}(x) / (t_{i+k} - t_i)
                           - B_{i+1,k-1}(x) / (t_{i+k+1} - t_{i+1}))
    and is zero at clamped (out-of-range) coordinates, where the clamp is
    locally constant.
    """
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2:
        raise SplineInputError(f"expected a 2-D input matrix, got ndim={xs.ndim}")
    bad = ~np.isfinite(xs)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise SplineInputError(f"basis input must be finite, got {xs[r, c]} at (row={r}, col={c})")
    xc = _clamp(grid, xs)
    k = grid.order
    t = grid.knots
    if k == 0:
        b = _bases_upto(grid, xc, 0)
        return b, np.zeros_like(b)
    b_prev = _bases_upto(grid, xc, k - 1)  # order k-1, basis_count + 1 columns
    u = xc[..., None]
    left = (u - t[: -(k + 1)]) / (t[k:-1] - t[: -(k + 1)]) * b_prev[..., :-1]
    right = (t[k + 1 :] - u) / (t[k + 1 :] - t[1:-k]) * b_prev[..., 1:]
    b = left + right
    deriv = k * (b_prev[..., :-1] / (t[k:-1] - t[: -(k + 1)]) - b_prev[..., 1:] / (t[k + 1 :] - t[1:-k]))
    in_range = (xs >= grid.range_min) & (xs <= grid.range_max)
    deriv = deriv * in_range[..., None]
    return b, deriv
