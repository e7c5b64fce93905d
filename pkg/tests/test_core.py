import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from scbi.core import (MarginalSpec, as_positive_matrix, as_probability_vector, columns_distinguishable,
                       cross_ratios, is_interior, kl_divergence, l1_distance, normalize_columns,
                       normalize_rows, normalize_vector, sample_column_stochastic,
                       sample_column_stochastic_batch, sample_simplex_uniform)
from scbi.errors import DegenerateVector, DimensionMismatch, InvalidMatrix, SupportMismatch

from conftest import EXAMPLE_JOINT, EXAMPLE_M

pos_mat = st.integers(2, 6).flatmap(
    lambda n: st.integers(2, n).flatmap(
        lambda m: arrays(float, (n, m), elements=st.floats(0.01, 10.0))))


def test_normalize_vector_examples():
    np.testing.assert_allclose(normalize_vector([0.3, 0.1]), [0.75, 0.25], atol=1e-12)
    np.testing.assert_allclose(normalize_vector([0.5, 0.5]), [0.5, 0.5], atol=1e-12)
    np.testing.assert_allclose(normalize_vector([2, 3, 5], 10), [2, 3, 5], atol=1e-12)
    with pytest.raises(DegenerateVector):
        normalize_vector([0.0, 0.0])


def test_normalize_columns_examples(rng):
    np.testing.assert_allclose(normalize_columns(EXAMPLE_JOINT), EXAMPLE_M, atol=1e-12)
    np.testing.assert_allclose(normalize_columns(EXAMPLE_M), EXAMPLE_M, atol=1e-15)
    A = rng.uniform(0.1, 1, (3, 3))
    B = normalize_columns(A)
    np.testing.assert_allclose(B.sum(axis=0), 1, atol=1e-12)
    np.testing.assert_allclose(cross_ratios(B), cross_ratios(A), rtol=1e-10)
    np.testing.assert_allclose(normalize_columns(A, [1, 2, 3]).sum(axis=0), [1, 2, 3], atol=1e-12)


def test_normalize_rows_examples(rng):
    np.testing.assert_allclose(normalize_rows([[1, 3], [2, 2]]), [[0.25, 0.75], [0.5, 0.5]], atol=1e-15)
    R = np.array([[0.2, 0.8], [0.5, 0.5]])
    np.testing.assert_allclose(normalize_rows(R), R, atol=1e-15)
    A = rng.uniform(0.1, 1, (4, 3))
    np.testing.assert_allclose(normalize_rows(A, [1, 2, 3, 4]).sum(axis=1), [1, 2, 3, 4], atol=1e-12)


@given(pos_mat)
def test_normalizations_keep_positivity_idempotence_and_cross_ratios(A):
    C = normalize_columns(A)
    assert np.all(C > 0)
    np.testing.assert_allclose(normalize_columns(C), C, rtol=1e-12)
    R = normalize_rows(A)
    assert np.all(R > 0)
    np.testing.assert_allclose(normalize_rows(R), R, rtol=1e-12)
    np.testing.assert_allclose(cross_ratios(C), cross_ratios(A), rtol=1e-10)
    np.testing.assert_allclose(cross_ratios(R), cross_ratios(A), rtol=1e-10)


def test_kl_examples():
    assert kl_divergence([0.5, 0.5], [0.5, 0.5]) == 0.0
    assert kl_divergence([0.75, 0.25], [0.5, 0.5]) == pytest.approx(0.75 * math.log(1.5) + 0.25 * math.log(0.5),
                                                                   abs=1e-15)
    assert kl_divergence([0.75, 0.25], [0.5, 0.5]) == pytest.approx(0.13081, abs=1e-5)
    assert kl_divergence([1.0, 0.0], [0.5, 0.5]) == pytest.approx(math.log(2), abs=1e-15)
    with pytest.raises(SupportMismatch):
        kl_divergence([0.5, 0.5], [1.0, 0.0])
    with pytest.raises(DimensionMismatch):
        kl_divergence([0.5, 0.5], [0.2, 0.3, 0.5])


def _kl_mp(p, q):
    mpmath.mp.dps = 40
    return float(sum(mpmath.mpf(a) * mpmath.log(mpmath.mpf(a) / mpmath.mpf(b)) for a, b in zip(p, q) if a > 0))


def test_kl_against_high_precision(rng):
    for _ in range(50):
        p = sample_simplex_uniform(5, rng)
        q = sample_simplex_uniform(5, rng)
        assert kl_divergence(p, q) == pytest.approx(_kl_mp(p, q), rel=1e-10, abs=1e-14)


def test_gibbs_inequality(rng):
    for _ in range(1000):
        dim = int(rng.integers(2, 6))
        p = sample_simplex_uniform(dim, rng)
        q = sample_simplex_uniform(dim, rng)
        assert kl_divergence(p, q) > 0
        assert l1_distance(p, q) >= 1e-12
        assert kl_divergence(p, p) == 0.0


def test_l1_examples():
    assert l1_distance([1, 0], [0, 1]) == 2
    assert l1_distance([0.3, 0.7], [0.3, 0.7]) == 0
    assert l1_distance([0.6, 0.4], [0.5, 0.5]) == pytest.approx(0.2)
    with pytest.raises(DimensionMismatch):
        l1_distance([1, 0], [1, 0, 0])


def test_probability_vector_admission():
    p = as_probability_vector([0.2, 0.8 + 5e-10])
    assert p.dtype == float
    with pytest.raises(DegenerateVector):
        as_probability_vector([0.2, 0.7])
    with pytest.raises(DegenerateVector):
        as_probability_vector([-0.1, 1.1])
    assert is_interior([0.5, 0.5]) and not is_interior([1.0, 0.0])


def test_positive_matrix_admission():
    as_positive_matrix(EXAMPLE_M)
    with pytest.raises(InvalidMatrix):
        as_positive_matrix([[0.5, 0.0], [0.5, 1.0]])
    with pytest.raises(InvalidMatrix):
        as_positive_matrix([[0.2, 0.4], [0.3, 0.6]])  # parallel columns
    with pytest.raises(InvalidMatrix):
        as_positive_matrix([[0.2, 0.4, 0.4]])  # n < m
    assert not columns_distinguishable(np.array([[1.0, 2.0], [3.0, 6.0]]))


def test_marginal_spec():
    MarginalSpec([1, 1], [1.5, 0.5])
    with pytest.raises(DegenerateVector):
        MarginalSpec([1, 1], [1, 2])
    with pytest.raises(DegenerateVector):
        MarginalSpec([1, 0], [0.5, 0.5])


def test_simplex_sampling_moments():
    rng = np.random.default_rng(1)
    x = sample_simplex_uniform(2, rng, 100_000)
    assert abs(x[:, 0].mean() - 0.5) < 0.005
    y = sample_simplex_uniform(3, rng, 100_000)
    np.testing.assert_allclose(y.mean(axis=0), 1 / 3, atol=0.005)
    assert np.all(y > 0)
    np.testing.assert_allclose(y.sum(axis=1), 1, atol=1e-12)
    # flat Dirichlet(1,1,1): marginal variance (1 * 2) / (9 * 4) = 1/18
    np.testing.assert_allclose(y.var(axis=0), 1 / 18, rtol=0.03)


def test_column_stochastic_sampling():
    M = sample_column_stochastic(3, 2, np.random.default_rng(5))
    np.testing.assert_allclose(M.sum(axis=0), 1, atol=1e-12)
    big = sample_column_stochastic(20, 20, np.random.default_rng(5))
    assert big.shape == (20, 20) and columns_distinguishable(big)
    again = sample_column_stochastic(20, 20, np.random.default_rng(5))
    assert np.array_equal(big, again)
    with pytest.raises(ValueError):
        sample_column_stochastic(2, 3, np.random.default_rng(0))


def test_batch_sampler_matches_single_draws():
    B = sample_column_stochastic_batch(4, 3, 5, np.random.default_rng(9))
    rng = np.random.default_rng(9)
    singles = np.stack([sample_column_stochastic(4, 3, rng) for _ in range(5)])
    np.testing.assert_array_equal(B, singles)
