import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ergoproc.errors import DestructiveImageError, UsageError
from ergoproc.matrices import (
    eigh,
    eigvalsh,
    hs_inner,
    is_density,
    matrix_from_json,
    matrix_to_json,
    normalize_state,
    random_density,
    random_hermitian,
    trace_norm,
    unvec,
    vec,
)

seeds = st.integers(0, 2**32 - 1)
dims = st.integers(2, 6)


def test_hs_inner_examples():
    I = np.eye(2)
    assert hs_inner(I, I) == 2.0
    assert hs_inner(np.diag([1, 0]), np.diag([0, 1])) == 0.0


def test_hs_inner_self_is_sum_of_squared_eigenvalues():
    A = random_hermitian(np.random.default_rng(7), 3)
    w = np.linalg.eigvalsh(A)
    assert hs_inner(A, A) == pytest.approx(np.sum(w**2), abs=1e-12)


def test_hs_inner_dimension_mismatch():
    with pytest.raises(UsageError):
        hs_inner(np.eye(2), np.eye(3))


def test_trace_norm_examples():
    assert trace_norm(np.eye(2)) == pytest.approx(2.0)
    assert trace_norm(np.diag([1.0, -1.0])) == pytest.approx(2.0)
    A = random_density(np.random.default_rng(3), 4) * 3.7
    assert trace_norm(A) == pytest.approx(np.trace(A).real, abs=1e-12)


def test_eigh_examples():
    w, _ = eigh(np.diag([3.0, 1.0, 2.0]))
    np.testing.assert_allclose(w, [1, 2, 3])
    w, _ = eigh(np.array([[0, 1], [1, 0]]))
    np.testing.assert_allclose(w, [-1, 1], atol=1e-15)


def test_eigh_reconstruction_seed_11():
    A = random_hermitian(np.random.default_rng(11), 5)
    w, V = eigh(A)
    assert trace_norm((V * w) @ V.conj().T - A) <= 1e-11
    np.testing.assert_allclose(V.conj().T @ V, np.eye(5), atol=1e-11)


def test_eigh_rejects_non_hermitian_and_dim_one():
    with pytest.raises(UsageError):
        eigh(np.array([[0, 1], [0, 0]]))
    with pytest.raises(UsageError):
        eigh(np.array([[1.0]]))


def test_normalize_state_examples():
    np.testing.assert_allclose(normalize_state(np.eye(2)), np.diag([0.5, 0.5]))
    np.testing.assert_allclose(normalize_state(np.diag([3.0, 1.0])), np.diag([0.75, 0.25]))
    with pytest.raises(DestructiveImageError):
        normalize_state(np.zeros((2, 2)))


@given(seeds, dims)
def test_trace_norm_of_psd_is_trace(seed, D):
    A = random_density(np.random.default_rng(seed), D) * 2.5
    assert abs(trace_norm(A) - hs_inner(np.eye(D), A)) <= 1e-12


@given(seeds, dims)
def test_eigenvalues_reconstruct_moments(seed, D):
    A = random_hermitian(np.random.default_rng(seed), D)
    w = eigvalsh(A)
    assert np.all(np.diff(w) >= 0)
    assert abs(w.sum() - np.trace(A).real) <= 1e-10
    assert abs((w**2).sum() - np.trace(A @ A).real) <= 1e-10


@given(seeds, dims)
def test_normalize_state_is_idempotent(seed, D):
    rho = random_density(np.random.default_rng(seed), D)
    assert is_density(rho)
    assert np.max(np.abs(normalize_state(rho) - rho)) <= 1e-12


@given(seeds, dims)
def test_vec_roundtrip_is_column_major(seed, D):
    A = random_hermitian(np.random.default_rng(seed), D)
    np.testing.assert_array_equal(vec(A), A.T.ravel())
    np.testing.assert_array_equal(unvec(vec(A), D), A)


def test_json_matrix_roundtrip():
    A = random_hermitian(np.random.default_rng(1), 3)
    np.testing.assert_array_equal(matrix_from_json(matrix_to_json(A)), A)
    with pytest.raises(UsageError):
        matrix_from_json([[[1, 2, 3]]])
