import numpy as np
import pytest

from straggle import checks, oracle
from straggle.matrix import SparseMatrix, gen_laplacian_1d
from straggle.sampling import StraggleDistribution, expected_t
from straggle.solvers import (ChebyshevParams, RichardsonParams, chebyshev_classical,
                              chebyshev_coeffs, richardson_classical)


def test_enumerate_masks_counts():
    assert len(oracle.enumerate_masks(4, 2)) == 6
    assert [m.tolist() for m in oracle.enumerate_masks(3, 3)] == [[0, 1, 2]]
    assert [m.tolist() for m in oracle.enumerate_masks(5, 1)] == [[0], [1], [2], [3], [4]]
    with pytest.raises(oracle.OracleError):
        oracle.enumerate_masks(21, 1)
    with pytest.raises(oracle.OracleError):
        oracle.enumerate_masks(4, 0)


def test_expected_perturbation_examples():
    np.testing.assert_allclose(oracle.expected_perturbation(np.eye(4), 1.0, 2), 0.5 * np.eye(4),
                               atol=1e-15)
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_allclose(oracle.expected_perturbation(a, 2.0, 1), a, atol=1e-15)
    assert np.all(oracle.expected_perturbation(a, 2.0, 2) == 0.0)


def test_mean_iterate_m_zero():
    a = oracle.random_spd(4, np.random.default_rng(0))
    z0 = np.arange(4.0)
    np.testing.assert_array_equal(oracle.exact_mean_iterate(a, np.ones(4), 0.1, 0.2, 2, 0, z0), z0)
    d0 = np.arange(8.0)
    got = oracle.exact_mean_chebyshev(a, np.ones(4), 0.1, 0.2, 0.3, 2, 0, d0)
    np.testing.assert_array_equal(np.concatenate(got), d0)


def test_three_by_three_nine_sequences():
    rng = np.random.default_rng(5)
    a = oracle.random_spd(3, rng)
    v, f = rng.standard_normal((2, 3))
    enum = oracle.enumerate_mean_iterate(a, v, 0.15, 0.2, 2, 2, f)
    rec = oracle.exact_mean_iterate(a, v, 0.15, 0.2, 2, 2, f)
    np.testing.assert_allclose(enum, rec, rtol=0, atol=1e-13)
    eta, nu = chebyshev_coeffs(1.0, 10.0)
    d0 = rng.standard_normal(6)
    e = np.concatenate(oracle.enumerate_mean_chebyshev(a, v, eta, nu, 1.2 * nu, 2, 2, d0))
    r = np.concatenate(oracle.exact_mean_chebyshev(a, v, eta, nu, 1.2 * nu, 2, 2, d0))
    np.testing.assert_allclose(e, r, rtol=0, atol=1e-13)


def test_sequence_cap():
    with pytest.raises(oracle.OracleError):
        oracle.enumerate_mean_iterate(np.eye(10), np.ones(10), 0.1, 0.1, 5, 3)


@pytest.mark.parametrize("n", [4, 9, 16])
def test_corrected_mean_equals_classical_up_to_fifty_steps(n):
    rng = np.random.default_rng(n)
    a = oracle.random_spd(n, rng)
    v, f = rng.standard_normal((2, n))
    A = SparseMatrix.from_dense(a)
    w = 2 / 11
    tr = richardson_classical(A, v, RichardsonParams(w, 50, z0=f), range(51))
    for t in range(1, n + 1):
        for m in (0, 1, 7, 50):
            mu = oracle.exact_mean_iterate(a, v, w, n / t * w, t, m, f)
            np.testing.assert_allclose(mu, tr.snapshots[m], rtol=0, atol=1e-12)


def test_chebyshev_corrected_mean_equals_classical():
    rng = np.random.default_rng(2)
    n = 10
    a = oracle.random_spd(n, rng)
    v, f, g = rng.standard_normal((3, n))
    eta, nu = chebyshev_coeffs(0.9, 11.0)
    tr = chebyshev_classical(SparseMatrix.from_dense(a), v,
                             ChebyshevParams(eta, nu, 30, z0=f, z_minus1=g), [30])
    for t in (1, 4, 10):
        got = np.concatenate(oracle.exact_mean_chebyshev(a, v, eta, nu, n / t * nu, t, 30,
                                                         np.concatenate([f, g])))
        np.testing.assert_allclose(got, tr.pair(30), rtol=0, atol=1e-12)


def test_uncorrected_mean_is_biased():
    rng = np.random.default_rng(7)
    n = 6
    a = oracle.random_spd(n, rng)
    v = rng.standard_normal(n)
    w = 2 / 11
    z = richardson_classical(SparseMatrix.from_dense(a), v, RichardsonParams(w, 5), range(6))
    gaps = [np.linalg.norm(oracle.exact_mean_iterate(a, v, w, w, 4, m) - z.snapshots[m])
            for m in range(1, 6)]
    assert max(gaps) > 1e-8


def test_mixture_oracle():
    rng = np.random.default_rng(8)
    n = 12
    a = oracle.random_spd(n, rng)
    v, f = rng.standard_normal((2, n))
    w = 2 / 11
    fixed = StraggleDistribution("fixed", n, 5.0)
    np.testing.assert_allclose(oracle.exact_mean_iterate_dist(a, v, w, 0.3, fixed, 9, f),
                               oracle.exact_mean_iterate(a, v, w, 0.3, 5, 9, f), atol=1e-14)
    # a varying T with the realized-mean correction still averages to the classical step
    uni = StraggleDistribution("uniform_interval", n, 9.0, 4)
    wh = n / expected_t(uni) * w
    z = richardson_classical(SparseMatrix.from_dense(a), v, RichardsonParams(w, 9, z0=f)).final
    np.testing.assert_allclose(oracle.exact_mean_iterate_dist(a, v, w, wh, uni, 9, f), z,
                               atol=1e-12)


def test_closed_form_matches_geometric_sum():
    rng = np.random.default_rng(9)
    a = oracle.random_spd(8, rng)
    v = rng.standard_normal(8)
    for m in (0, 1, 10, 40):
        np.testing.assert_allclose(oracle.closed_form_mean(a, v, 0.18, 0.3, 5.0, m),
                                   oracle.geometric_mean(a, v, 0.18, 0.3, 5.0, m),
                                   rtol=0, atol=1e-12)


def test_closed_form_converges_to_solution():
    rng = np.random.default_rng(10)
    n = 12
    a = oracle.random_spd(n, rng)
    v = rng.standard_normal(n)
    w = 2 / 11
    et = 9.0
    z = np.linalg.solve(a, v)
    errs = [np.linalg.norm(oracle.closed_form_mean(a, v, w, n / et * w, et, m) - z)
            for m in range(0, 120, 10)]
    assert all(e1 < e0 for e0, e1 in zip(errs, errs[1:]))
    assert errs[-1] < 1e-6 * errs[0]


def test_expected_fm():
    rng = np.random.default_rng(11)
    a = oracle.random_spd(5, rng)
    np.testing.assert_allclose(oracle.expected_fm(a, 0.3, 2.0, 1), np.eye(5) - 2 / 5 * 0.3 * a)
    assert np.all(oracle.expected_fm(np.eye(4), 1.0, 4.0, 7) == 0.0)
    with pytest.raises(oracle.OracleError):
        oracle.expected_fm(a, 0.3, 2.0, 0)


def test_expected_fm_limit():
    a = gen_laplacian_1d(8).to_dense()
    lam = np.linalg.eigvalsh(a)
    w = 2 / (lam[0] + lam[-1])
    rho = np.abs(1 - w * lam).max()
    m = 200
    limit = np.linalg.inv(w * a) - np.eye(8)
    err = np.linalg.norm(oracle.expected_fm(a, w, 8.0, m) - limit, "fro")
    assert err <= rho ** (m + 1) / (1 - rho) * np.sqrt(8)


def test_dense_cap():
    with pytest.raises(oracle.OracleError):
        oracle.exact_mean_iterate(np.eye(65), np.ones(65), 0.1, 0.1, 3, 1)


def test_verify_suite_all_pass():
    results = checks.run_all()
    assert [c.name for c in results if not c.passed] == []
