import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from straggle.matrix import SparseMatrix, gen_laplacian_3d, matvec
from straggle.partial import apply_iteration_matrix, partial_matvec, partial_matvec_many

A4 = SparseMatrix.from_dense(np.arange(1.0, 17.0).reshape(4, 4))
F4 = np.array([1.0, -2.0, 0.5, 3.0])


def test_first_and_last_rows():
    full = A4.to_dense() @ F4
    np.testing.assert_array_equal(partial_matvec(A4, F4, [0, 3]), [full[0], 0, 0, full[3]])


def test_single_row():
    full = A4.to_dense() @ F4
    np.testing.assert_array_equal(partial_matvec(A4, F4, [2]), [0, 0, full[2], 0])


def test_full_mask_is_matvec_bitwise():
    A = gen_laplacian_3d(4)
    f = np.random.default_rng(0).standard_normal(A.n)
    assert partial_matvec(A, f, np.arange(A.n)).tobytes() == matvec(A, f).tobytes()


@pytest.mark.parametrize("mask", [[1, 1], [2, 1], [[0, 1]]])
def test_malformed_masks(mask):
    with pytest.raises(ValueError):
        partial_matvec(A4, F4, np.array(mask, dtype=np.int64))


@pytest.mark.parametrize("mask", [[0, 4], [-1]])
def test_out_of_range_masks(mask):
    with pytest.raises(IndexError):
        partial_matvec(A4, F4, np.array(mask, dtype=np.int64))


def test_empty_mask_is_zero():
    np.testing.assert_array_equal(partial_matvec(A4, F4, np.array([], dtype=np.int64)), 0.0)
    with pytest.raises(ValueError):
        partial_matvec(A4, F4[:3], [0])


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 40), st.integers(0, 2**32 - 1))
def test_masked_rows_bitwise_unmasked_zero(n, seed):
    rng = np.random.default_rng(seed)
    dense = rng.standard_normal((n, n)) * (rng.random((n, n)) < 0.4)
    A = SparseMatrix.from_dense(dense)
    f = rng.standard_normal(n)
    mask = np.sort(rng.choice(n, size=rng.integers(1, n + 1), replace=False))
    y = partial_matvec(A, f, mask)
    full = matvec(A, f)
    assert y[mask].tobytes() == full[mask].tobytes()
    rest = np.setdiff1d(np.arange(n), mask)
    assert np.all(y[rest] == 0.0) and not np.signbit(y[rest]).any()


@pytest.mark.parametrize("n", range(1, 7))
def test_average_over_all_masks(n):
    rng = np.random.default_rng(n)
    a = rng.standard_normal((n, n))
    A = SparseMatrix.from_dense(a)
    f = rng.standard_normal(n)
    for t in range(1, n + 1):
        masks = list(itertools.combinations(range(n), t))
        avg = sum(partial_matvec(A, f, np.array(m)) for m in masks) / len(masks)
        np.testing.assert_allclose(avg, t / n * (a @ f), rtol=0, atol=1e-13)


def test_iteration_matrix_examples():
    z = np.array([1.0, 2.0, 3.0])
    A = gen_laplacian_3d(1)
    np.testing.assert_array_equal(apply_iteration_matrix(A, [4.0], [0], 0.0), [4.0])
    I3 = SparseMatrix.identity(3)
    np.testing.assert_array_equal(apply_iteration_matrix(I3, z, [0, 1, 2], 1.0), [0, 0, 0])
    np.testing.assert_array_equal(apply_iteration_matrix(I3, z, [1], 0.0), z)
    D = SparseMatrix.diag([2.0, 4.0])
    np.testing.assert_array_equal(apply_iteration_matrix(D, [1.0, 1.0], [0], 0.5), [0.0, 1.0])


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 30), st.integers(0, 2**32 - 1), st.floats(-3, 3))
def test_iteration_matrix_matches_dense_composition(n, seed, wh):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, n))
    z = rng.standard_normal(n)
    mask = np.sort(rng.choice(n, size=rng.integers(1, n + 1), replace=False))
    d = np.zeros(n)
    d[mask] = 1.0
    expected = (np.eye(n) - wh * (d[:, None] * a)) @ z
    got = apply_iteration_matrix(SparseMatrix.from_dense(a), z, mask, wh)
    np.testing.assert_allclose(got, expected, rtol=1e-12, atol=1e-12)


def test_many_matches_single():
    rng = np.random.default_rng(3)
    A = gen_laplacian_3d(3)
    F = rng.standard_normal((A.n, 5))
    masks = rng.random((A.n, 5)) < 0.6
    Y = partial_matvec_many(A, F, masks)
    for k in range(5):
        idx = np.flatnonzero(masks[:, k])
        np.testing.assert_array_equal(Y[:, k], partial_matvec(A, F[:, k], idx))
