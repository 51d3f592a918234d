import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from ottd.errors import (DegenerateModelError, InvalidInputError, MultiplicityError, ShapeError,
                         SingularSystemError)
from ottd.numerics import (inf_norm, linear_solve, min_eig_mmtd, orth, pinv, power_iteration_radius,
                           spectral_radius, stationary_distribution, weighted_norm, weighted_operator_norm)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


# ---- oracles


def test_pinv_of_invertible_is_inverse():
    A = np.array([[2.0, 1.0], [1.0, 3.0]])
    assert np.allclose(pinv(A), np.linalg.inv(A))


def test_pinv_of_row_vector():
    assert np.allclose(pinv(np.array([[3.0, 4.0]])), np.array([[3.0], [4.0]]) / 25.0)


def test_pinv_of_zero_matrix_is_zero_transpose():
    assert np.array_equal(pinv(np.zeros((2, 3))), np.zeros((3, 2)))


def test_pinv_rejects_empty_and_negative_cutoff():
    with pytest.raises(InvalidInputError):
        pinv(np.zeros((0, 2)))
    with pytest.raises(InvalidInputError):
        pinv(np.eye(2), rcond=-1.0)


def test_spectral_radius_of_rotation_and_jordan_block():
    assert spectral_radius(np.array([[0.0, -1.0], [1.0, 0.0]])) == pytest.approx(1.0)
    assert spectral_radius(np.array([[0.5, 1.0], [0.0, 0.5]])) == pytest.approx(0.5)


def test_spectral_radius_rejects_nonsquare():
    with pytest.raises(ShapeError):
        spectral_radius(np.ones((2, 3)))


def test_inf_norm_is_max_row_sum():
    assert inf_norm(np.array([[1.0, -2.0], [0.5, 0.5]])) == 3.0


def test_min_eig_mmtd_identity_and_rank_deficiency():
    assert min_eig_mmtd(np.eye(3), np.array([0.2, 0.3, 0.5])) == pytest.approx(0.2)
    with pytest.raises(DegenerateModelError):
        min_eig_mmtd(np.array([[1.0, 0.0], [2.0, 0.0]]), np.array([0.5, 0.5]))
    with pytest.raises(InvalidInputError):
        min_eig_mmtd(np.eye(2), np.array([1.0, 0.0]))


def test_linear_solve_refuses_singular():
    assert np.allclose(linear_solve(np.array([[2.0, 0.0], [0.0, 4.0]]), np.array([2.0, 2.0])), [1.0, 0.5])
    with pytest.raises(SingularSystemError):
        linear_solve(np.array([[1.0, 2.0], [2.0, 4.0]]), np.array([1.0, 1.0]))


def test_stationary_distribution_two_state_chain():
    P = np.array([[0.9, 0.1], [0.5, 0.5]])
    assert np.allclose(stationary_distribution(P), [5 / 6, 1 / 6])


def test_stationary_distribution_periodic_chain():
    P = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert np.allclose(stationary_distribution(P), [0.5, 0.5])


def test_stationary_distribution_reducible_chain_is_ambiguous():
    with pytest.raises(MultiplicityError):
        stationary_distribution(np.eye(2))


def test_stationary_distribution_rejects_non_stochastic():
    with pytest.raises(InvalidInputError):
        stationary_distribution(np.array([[0.5, 0.4], [0.5, 0.5]]))


def test_weighted_operator_norm_uniform_weights_is_spectral_norm():
    A = np.array([[1.0, 2.0], [0.0, 1.0]])
    assert weighted_operator_norm(A, np.ones(2)) == pytest.approx(np.linalg.norm(A, 2))
    with pytest.raises(InvalidInputError):
        weighted_operator_norm(A, np.array([1.0, 0.0]))


def test_orth_spans_column_space():
    A = np.array([[1.0, 2.0], [2.0, 4.0], [0.0, 0.0]])
    Q = orth(A)
    assert Q.shape == (3, 1)
    assert np.allclose(Q @ Q.T @ A, A)


# ---- properties


def random_matrix(rows, cols, rank, seed):
    """Gaussian matrix of the given rank (product of two Gaussian factors)."""
    rng = np.random.default_rng(seed)
    return rng.standard_normal((rows, rank)) @ rng.standard_normal((rank, cols))


shaped = st.tuples(st.integers(1, 7), st.integers(1, 7), st.integers(1, 7), st.integers(0, 10_000))


@given(shaped)
def test_penrose_identities(args):
    rows, cols, rank, seed = args
    A = random_matrix(rows, cols, min(rank, rows, cols), seed)
    X = pinv(A)
    tol = 1e-8 * max(1.0, np.abs(A).max()) * max(1.0, np.abs(X).max()) ** 2
    assert np.abs(A @ X @ A - A).max() <= tol
    assert np.abs(X @ A @ X - X).max() <= tol
    assert np.abs((A @ X).T - A @ X).max() <= tol
    assert np.abs((X @ A).T - X @ A).max() <= tol
    assert np.linalg.matrix_rank(X) == np.linalg.matrix_rank(A)


@given(st.integers(1, 6), st.integers(0, 10_000))
def test_spectral_radius_matches_power_iteration_on_positive_matrices(n, seed):
    A = np.random.default_rng(seed).uniform(0.05, 1.0, size=(n, n))
    assert power_iteration_radius(A) == pytest.approx(spectral_radius(A), rel=1e-8)


@given(st.integers(1, 7), st.integers(0, 10_000))
def test_stationary_distribution_is_fixed_point(n, seed):
    P = np.random.default_rng(seed).dirichlet(np.ones(n), size=n)
    d = stationary_distribution(P)
    assert np.all(d >= 0) and d.sum() == pytest.approx(1.0)
    assert np.abs(d @ P - d).max() <= 1e-10


@given(arrays(float, 5, elements=finite), st.integers(0, 1000))
def test_weighted_norm_is_operator_consistent(x, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((5, 5))
    w = rng.uniform(0.1, 1.0, size=5)
    assert weighted_norm(A @ x, w) <= weighted_operator_norm(A, w) * weighted_norm(x, w) + 1e-9 * (1 + np.abs(x).max())
