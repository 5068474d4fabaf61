"""Exact expectations of the randomized iterations on small dense problems.

Two independent routes are provided: brute-force enumeration over every row
subset (or every sequence of subsets), and expectation recurrences that use
the independence of the per-iteration masks. Tests pit one against the other.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from .sampling import StraggleDistribution

MAX_ENUM_N = 20
MAX_DENSE_N = 64
MAX_SEQUENCES = 100_000


class OracleError(ValueError):
    """Input outside the range the brute-force oracle is allowed to handle."""


def as_dense(A, cap: int = MAX_DENSE_N) -> np.ndarray:
    a = A.to_dense() if hasattr(A, "to_dense") else np.asarray(A, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise OracleError("oracle needs a square matrix")
    if a.shape[0] > cap:
        raise OracleError(f"n={a.shape[0]} exceeds the dense oracle cap {cap}")
    return a


def enumerate_masks(n: int, t: int) -> list[np.ndarray]:
    """All ``C(n, t)`` sorted row subsets, in lexicographic order."""
    if n > MAX_ENUM_N:
        raise OracleError(f"n={n} exceeds the enumeration cap {MAX_ENUM_N}")
    if not 1 <= t <= n:
        raise OracleError(f"t={t} outside [1, {n}]")
    return [np.array(c, dtype=np.int64) for c in itertools.combinations(range(n), t)]


def _selector(n, mask):
    d = np.zeros(n)
    d[mask] = 1.0
    return d


def expected_perturbation(A, omega_hat: float, t: int, check: bool = True) -> np.ndarray:
    """Average of ``omega_hat (I - D_T) A`` over every ``t``-subset.

    With ``check`` the result is compared with ``(n - t)/n * omega_hat * A``.
    """
    a = as_dense(A, MAX_ENUM_N)
    n = a.shape[0]
    masks = enumerate_masks(n, t)
    total = np.zeros_like(a)
    for mask in masks:
        total += omega_hat * ((1.0 - _selector(n, mask))[:, None] * a)
    mean = total / len(masks)
    if check:
        closed = (n - t) / n * omega_hat * a
        err = np.abs(mean - closed).max()
        if err > 1e-13 * max(1.0, np.abs(closed).max()):
            raise AssertionError(f"enumerated perturbation off by {err:.3e}")
    return mean


def expected_step_matrix(A, omega_hat: float, t: int) -> np.ndarray:
    """Average of ``I - omega_hat D_T A`` over every ``t``-subset."""
    a = as_dense(A, MAX_ENUM_N)
    n = a.shape[0]
    masks = enumerate_masks(n, t)
    total = np.zeros_like(a)
    for mask in masks:
        total += np.eye(n) - omega_hat * (_selector(n, mask)[:, None] * a)
    return total / len(masks)


def _mean_step(a, omega_hat, ratio):
    return np.eye(a.shape[0]) - ratio * omega_hat * a


def exact_mean_iterate(A, v, omega: float, omega_hat: float, t: int, m: int,
                       z0=None) -> np.ndarray:
    """``E[z_m]`` for fixed ``T = t`` via ``mu_i = (I - t/n omega_hat A) mu_{i-1} + omega v``."""
    a = as_dense(A)
    n = a.shape[0]
    if not 1 <= t <= n:
        raise OracleError(f"t={t} outside [1, {n}]")
    if m < 0:
        raise OracleError("m must be nonnegative")
    return _mean_recurrence(a, v, omega, omega_hat, t / n, m, z0)


def _mean_recurrence(a, v, omega, omega_hat, ratio, m, z0):
    n = a.shape[0]
    v = np.asarray(v, dtype=np.float64)
    mu = np.zeros(n) if z0 is None else np.array(z0, dtype=np.float64)
    M = _mean_step(a, omega_hat, ratio)
    for _ in range(m):
        mu = M @ mu + omega * v
    return mu


def exact_mean_iterate_dist(A, v, omega: float, omega_hat: float,
                            dist: StraggleDistribution, m: int, z0=None) -> np.ndarray:
    """``E[z_m]`` when ``T`` is redrawn from ``dist`` at every step.

    The one-step mean is the probability-weighted sum of the fixed-``T``
    step matrices over the support of ``dist``.
    """
    a = as_dense(A)
    n = a.shape[0]
    if dist.n != n:
        raise OracleError("distribution dimension does not match the matrix")
    values, probs = dist.support()
    M = sum(p * _mean_step(a, omega_hat, t / n) for t, p in zip(values, probs))
    v = np.asarray(v, dtype=np.float64)
    mu = np.zeros(n) if z0 is None else np.array(z0, dtype=np.float64)
    for _ in range(m):
        mu = M @ mu + omega * v
    return mu


def _check_sequences(n, t, m):
    count = math.comb(n, t) ** m
    if count > MAX_SEQUENCES:
        raise OracleError(f"{count} mask sequences exceed the cap {MAX_SEQUENCES}")


def enumerate_mean_iterate(A, v, omega: float, omega_hat: float, t: int, m: int,
                           z0=None) -> np.ndarray:
    """``E[z_m]`` by running every one of the ``C(n,t)^m`` mask sequences."""
    a = as_dense(A, MAX_ENUM_N)
    n = a.shape[0]
    _check_sequences(n, t, m)
    v = np.asarray(v, dtype=np.float64)
    # rows of `states` are the iterates of all sequences so far, lexicographic
    states = (np.zeros(n) if z0 is None else np.array(z0, dtype=np.float64))[None, :]
    steps = [np.eye(n) - omega_hat * (_selector(n, k)[:, None] * a)
             for k in enumerate_masks(n, t)]
    for _ in range(m):
        states = np.concatenate(
            [(S @ states.T).T + omega * v for S in steps], axis=0)
    return states.sum(axis=0) / states.shape[0]


def closed_form_mean(A, v, omega: float, omega_hat: float, expected_t: float,
                     m: int) -> np.ndarray:
    """``E[z_m]`` for the start ``z_0 = omega v`` as a finished geometric sum:
    ``omega (cA)^{-1} (I - (I - cA)^{m+1}) v`` with ``c = E[T]/N * omega_hat``.
    """
    a = as_dense(A)
    n = a.shape[0]
    c = expected_t / n * omega_hat
    v = np.asarray(v, dtype=np.float64)
    M = np.eye(n) - c * a
    w = v.copy()
    for _ in range(m + 1):
        w = M @ w
    try:
        return omega * np.linalg.solve(c * a, v - w)
    except np.linalg.LinAlgError as exc:
        raise OracleError(f"(E[T]/N) omega_hat A is singular: {exc}") from None


def geometric_mean(A, v, omega: float, omega_hat: float, expected_t: float,
                   m: int) -> np.ndarray:
    """Same quantity as :func:`closed_form_mean`, summed term by term."""
    a = as_dense(A)
    n = a.shape[0]
    M = np.eye(n) - expected_t / n * omega_hat * a
    term = np.asarray(v, dtype=np.float64).copy()
    total = term.copy()
    for _ in range(m):
        term = M @ term
        total += term
    return omega * total


def expected_fm(A, omega_hat: float, expected_t: float, m: int) -> np.ndarray:
    """``sum_{j=1}^m (I - E[T]/N omega_hat A)^j``."""
    if m < 1:
        raise OracleError("m must be at least 1")
    a = as_dense(A)
    n = a.shape[0]
    M = np.eye(n) - expected_t / n * omega_hat * a
    P = M.copy()
    total = M.copy()
    for _ in range(m - 1):
        P = P @ M
        total += P
    return total


def chebyshev_block(A, eta: float, nu: float) -> np.ndarray:
    """The ``2n x 2n`` matrix ``[[(1+eta)I - nu A, -eta I], [I, 0]]``."""
    a = as_dense(A)
    n = a.shape[0]
    I = np.eye(n)
    return np.block([[(1 + eta) * I - nu * a, -eta * I], [I, np.zeros((n, n))]])


def exact_mean_chebyshev(A, v, eta: float, nu: float, nu_hat: float, t: int,
                         m: int, d0) -> tuple[np.ndarray, np.ndarray]:
    """``E[(z_m, z_{m-1})]`` for fixed ``T = t`` from ``d_i = E[C_i] d_{i-1} + b``.

    ``d0`` is the stacked start ``[z_0; z_{-1}]``.
    """
    a = as_dense(A)
    n = a.shape[0]
    if not 1 <= t <= n:
        raise OracleError(f"t={t} outside [1, {n}]")
    C = chebyshev_block(a, eta, t / n * nu_hat)
    b = np.concatenate([nu * np.asarray(v, dtype=np.float64), np.zeros(n)])
    d = np.array(d0, dtype=np.float64)
    if d.shape != (2 * n,):
        raise OracleError("d0 must have length 2n")
    for _ in range(m):
        d = C @ d + b
    return d[:n], d[n:]


def enumerate_mean_chebyshev(A, v, eta: float, nu: float, nu_hat: float, t: int,
                             m: int, d0) -> tuple[np.ndarray, np.ndarray]:
    """Chebyshev counterpart of :func:`enumerate_mean_iterate`."""
    a = as_dense(A, MAX_ENUM_N)
    n = a.shape[0]
    _check_sequences(n, t, m)
    b = np.concatenate([nu * np.asarray(v, dtype=np.float64), np.zeros(n)])
    I = np.eye(n)
    blocks = []
    for k in enumerate_masks(n, t):
        DA = _selector(n, k)[:, None] * a
        blocks.append(np.block([[(1 + eta) * I - nu_hat * DA, -eta * I],
                                [I, np.zeros((n, n))]]))
    states = np.array(d0, dtype=np.float64)[None, :]
    for _ in range(m):
        states = np.concatenate([(C @ states.T).T + b for C in blocks], axis=0)
    d = states.sum(axis=0) / states.shape[0]
    return d[:n], d[n:]


# ---------------------------------------------------------------- fixtures

def random_spd(n: int, rng: np.random.Generator, lo: float = 1.0,
               hi: float = 10.0) -> np.ndarray:
    """Dense SPD matrix with eigenvalues drawn from ``[lo, hi]``."""
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    lam = rng.uniform(lo, hi, size=n)
    lam[0], lam[-1] = lo, hi
    a = (Q * lam) @ Q.T
    return (a + a.T) / 2
