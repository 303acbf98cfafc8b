import numpy as np
import pytest

from kandet.numerics import (
    EvaluationError,
    SeededRng,
    ShapeError,
    _splitmix64,
    finite_difference_gradient,
    matmul,
)

from oracles import matmul_triple_loop


def test_matmul_identity():
    a = np.arange(9.0).reshape(3, 3) + 1
    assert np.array_equal(matmul(np.eye(3), a), a)


def test_matmul_hand_countable():
    out = matmul([[1.0, 2.0], [3.0, 4.0]], [[0.0], [1.0]])
    assert np.array_equal(out, [[2.0], [4.0]])


def test_matmul_matches_triple_loop_oracle():
    rng = SeededRng(11)
    a = rng.normal(7 * 5).reshape(7, 5)
    b = rng.normal(5 * 3).reshape(5, 3)
    assert np.abs(matmul(a, b) - matmul_triple_loop(a, b)).max() < 1e-12


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 2\)"):
        matmul(np.zeros((2, 3)), np.zeros((2, 2)))


def test_matmul_associativity():
    rng = SeededRng(5)
    for _ in range(10):
        a = rng.normal(4 * 3).reshape(4, 3)
        b = rng.normal(3 * 5).reshape(3, 5)
        c = rng.normal(5 * 2).reshape(5, 2)
        left = matmul(matmul(a, b), c)
        right = matmul(a, matmul(b, c))
        assert np.abs(left - right).max() / max(np.abs(left).max(), 1.0) < 1e-9


def test_finite_difference_quadratic():
    grad = finite_difference_gradient(lambda v: float(v[0] ** 2), np.array([3.0]), h=1e-5)
    assert abs(grad[0] - 6.0) < 1e-8


def test_finite_difference_constant():
    grad = finite_difference_gradient(lambda v: 1.25, np.arange(5.0))
    assert np.array_equal(grad, np.zeros(5))


def test_finite_difference_matches_analytic_logistic_loss():
    # one-parameter sigmoid model under log loss has gradient (p - y) * x
    x, y = 1.7, 1.0

    def loss(w):
        p = 1.0 / (1.0 + np.exp(-w[0] * x))
        return -(y * np.log(p) + (1 - y) * np.log(1 - p))

    w0 = np.array([0.3])
    p0 = 1.0 / (1.0 + np.exp(-w0[0] * x))
    analytic = (p0 - y) * x
    fd = finite_difference_gradient(loss, w0, h=1e-5)[0]
    assert abs(fd - analytic) / abs(analytic) < 1e-6


def test_finite_difference_nonfinite_names_index():
    def f(v):
        return float("inf") if v[1] > 0.5 else 0.0

    with pytest.raises(EvaluationError, match="index 1"):
        finite_difference_gradient(f, np.array([0.0, 0.5]))


def test_splitmix64_reference_vector():
    # first outputs for seed 0, from the public SplitMix64 reference
    sm = _splitmix64(0)
    assert [next(sm) for _ in range(3)] == [
        0xE220A8397B1DCDAF,
        0x6E789E6AA1B965F4,
        0x06C45D188009454F,
    ]


def test_stream_is_bit_identical_for_same_seed():
    a = SeededRng(42)
    b = SeededRng(42)
    assert [a.next_uint64() for _ in range(100)] == [b.next_uint64() for _ in range(100)]
    assert np.array_equal(SeededRng(9).uniform(50), SeededRng(9).uniform(50))
    assert np.array_equal(SeededRng(9).normal(51), SeededRng(9).normal(51))


def test_stream_snapshot_locks_cross_version_stability():
    # frozen snapshots of this generator; any drift breaks the documented
    # reproducibility contract
    r = SeededRng(2024)
    assert [r.next_uint64() for _ in range(4)] == [
        9674054429496410833,
        5440047934801865465,
        4492727561091312426,
        7778185236240025452,
    ]
    np.testing.assert_allclose(
        SeededRng(7).uniform(3),
        [0.05536043647833311, 0.17211585444811772, 0.7175761283586594],
        rtol=0, atol=0,
    )
    np.testing.assert_allclose(
        SeededRng(7).normal(3),
        [1.1308649617728406, 2.123422851180661, -0.7309773798159506],
        rtol=0, atol=0,
    )


def test_normal_std_zero_returns_mean():
    z = SeededRng(1).normal(64, mean=2.5, std=0.0)
    assert np.array_equal(z, np.full(64, 2.5))


def test_normal_moments_large_sample():
    z = SeededRng(42).normal(100_000)
    assert abs(z.mean()) < 0.02
    assert abs(z.std() - 1.0) < 0.02


def test_normal_negative_std_rejected():
    with pytest.raises(ValueError, match="std"):
        SeededRng(0).normal(3, std=-1.0)


def test_permutation_is_a_permutation():
    perm = SeededRng(3).permutation(100)
    assert sorted(perm.tolist()) == list(range(100))
    assert np.array_equal(perm, SeededRng(3).permutation(100))
