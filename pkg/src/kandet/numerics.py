"""Minimal numeric substrate: matrix helpers, a portable seeded PRNG, and a
finite-difference gradient oracle.

Matrices throughout the package are 2-D ``numpy.float64`` arrays, row-major.
All heavier numerics (spline evaluation, layer math) build on numpy ops but
every gradient in the package is checked against ``finite_difference_gradient``.

The PRNG is xoshiro256++ (Blackman & Vigna, public domain) with the 256-bit
state expanded from a 64-bit seed via SplitMix64, and normal deviates produced
by the Box-Muller transform.  The exact scheme is documented in the README so
an independent implementation can reproduce the streams bit-for-bit.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class EvaluationError(ValueError):
    """A numeric evaluation produced a non-finite value."""


def as_matrix(values) -> np.ndarray:
    """Coerce to a 2-D float64 array (the package-wide matrix carrier)."""
    a = np.asarray(values, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got ndim={a.ndim}")
    return a


def matmul(a, b) -> np.ndarray:
    """Matrix product with explicit shape checking.

    Raises ShapeError naming both shapes on a dimension mismatch, and
    EvaluationError if the product contains non-finite entries.
    """
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}: inner dimensions differ")
    out = a @ b
    if not np.isfinite(out).all():
        raise EvaluationError("matrix product contains non-finite entries")
    return out


def finite_difference_gradient(f: Callable[[np.ndarray], float], x, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function of a vector.

    grad[i] = (f(x + h*e_i) - f(x - h*e_i)) / (2h).  Used as the independent
    oracle for every hand-derived backward pass in the package.
    """
    if h <= 0:
        raise ValueError(f"step must be positive, got {h}")
    x = np.asarray(x, dtype=np.float64).ravel().copy()
    grad = np.empty_like(x)
    for i in range(x.size):
        orig = x[i]
        x[i] = orig + h
        fp = float(f(x))
        x[i] = orig - h
        fm = float(f(x))
        x[i] = orig
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise EvaluationError(f"function evaluated to a non-finite value at index {i}")
        grad[i] = (fp - fm) / (2.0 * h)
    return grad


_MASK64 = (1 << 64) - 1
_INV_2_53 = 2.0 ** -53


def _splitmix64(seed: int):
    """SplitMix64 stream used to expand a 64-bit seed into generator state."""
    s = seed & _MASK64
    while True:
        s = (s + 0x9E3779B97F4A7C15) & _MASK64
        z = s
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        yield z ^ (z >> 31)


class SeededRng:
    """Deterministic xoshiro256++ stream.

    Identical seeds produce identical streams on every platform; there is no
    global state.  Uniform doubles take the top 53 bits of each output word;
    normals come from Box-Muller applied to consecutive uniform pairs.
    """

    def __init__(self, seed: int):
        seed = int(seed)
        if not 0 <= seed < (1 << 64):
            raise ValueError(f"seed must fit an unsigned 64-bit integer, got {seed}")
        self.seed = seed
        sm = _splitmix64(seed)
        state = [next(sm) for _ in range(4)]
        if not any(state):  # xoshiro state must be nonzero; unreachable via SplitMix64
            state[0] = 1
        self._s = tuple(state)

    def next_uint64(self) -> int:
        s0, s1, s2, s3 = self._s
        r = (s0 + s3) & _MASK64
        r = ((((r << 23) | (r >> 41)) & _MASK64) + s0) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = ((s3 << 45) | (s3 >> 19)) & _MASK64
        self._s = (s0, s1, s2, s3)
        return r

    def _raw(self, n: int) -> list[int]:
        s0, s1, s2, s3 = self._s
        out = []
        append = out.append
        for _ in range(n):
            r = (s0 + s3) & _MASK64
            append(((((r << 23) | (r >> 41)) & _MASK64) + s0) & _MASK64)
            t = (s1 << 17) & _MASK64
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = ((s3 << 45) | (s3 >> 19)) & _MASK64
        self._s = (s0, s1, s2, s3)
        return out

    def uniform(self, n: int) -> np.ndarray:
        """n doubles in [0, 1): top 53 bits of each word scaled by 2^-53."""
        words = np.array(self._raw(n), dtype=np.uint64)
        return (words >> np.uint64(11)).astype(np.float64) * _INV_2_53

    def normal(self, n: int, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
        """n normal draws via Box-Muller on consecutive uniform pairs."""
        if std < 0:
            raise ValueError(f"std must be non-negative, got {std}")
        if n == 0:
            return np.empty(0, dtype=np.float64)
        pairs = (n + 1) // 2
        words = np.array(self._raw(2 * pairs), dtype=np.uint64)
        u = (words >> np.uint64(11)).astype(np.float64) * _INV_2_53
        u1 = u[0::2] + _INV_2_53  # shift into (0, 1] so log is finite
        u2 = u[1::2]
        radius = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * math.pi * u2
        z = np.empty(2 * pairs, dtype=np.float64)
        z[0::2] = radius * np.cos(theta)
        z[1::2] = radius * np.sin(theta)
        return mean + std * z[:n]

    def integer_below(self, bound: int) -> int:
        """Draw from [0, bound) by modulo reduction (bias negligible, bound << 2^64)."""
        if bound <= 0:
            raise ValueError(f"bound must be positive, got {bound}")
        return self.next_uint64() % bound

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of range(n)."""
        idx = np.arange(n)
        for i in range(n - 1, 0, -1):
            j = self.integer_below(i + 1)
            idx[i], idx[j] = idx[j], idx[i]
        return idx
