"""Small-scale exactness checks of the expectation identities, run by
``straggle verify`` and by the acceptance tests."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import oracle
from .matrix import SparseMatrix
from .solvers import (ChebyshevParams, RichardsonParams, chebyshev_classical,
                      chebyshev_coeffs, richardson_classical)


@dataclass
class Check:
    name: str
    max_error: float
    tol: float
    seconds: float
    cases: int

    @property
    def passed(self) -> bool:
        return bool(self.max_error <= self.tol)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status}  {self.name:<28} max_err={self.max_error:.3e} "
                f"tol={self.tol:.0e} cases={self.cases} ({self.seconds:.2f}s)")


def _timed(name, tol, fn):
    t0 = time.perf_counter()
    err, cases = fn()
    return Check(name, err, tol, time.perf_counter() - t0, cases)


def _grid(n_values):
    for n in n_values:
        for t in range(1, n + 1):
            yield n, t


def perturbation_mean(seed: int = 0, n_values=range(2, 7), reps: int = 20,
                      tol: float = 1e-13) -> Check:
    """Enumerated mean of ``omega_hat (I - D_T) A`` versus ``(n-t)/n omega_hat A``."""
    def run():
        rng = np.random.default_rng(seed)
        worst, cases = 0.0, 0
        for n, t in _grid(n_values):
            for _ in range(reps):
                a = rng.standard_normal((n, n))
                wh = rng.uniform(0.1, 2.0)
                got = oracle.expected_perturbation(a, wh, t, check=False)
                worst = max(worst, np.abs(got - (n - t) / n * wh * a).max())
                cases += 1
        return worst, cases
    return _timed("perturbation-mean", tol, run)


def unbiased_step(seed: int = 1, n_values=range(2, 7), reps: int = 20,
                  tol: float = 1e-13) -> Check:
    """Enumerated mean of ``I - (n/t) omega D_T A`` versus ``I - omega A``."""
    def run():
        rng = np.random.default_rng(seed)
        worst, cases = 0.0, 0
        for n, t in _grid(n_values):
            for _ in range(reps):
                a = rng.standard_normal((n, n))
                w = rng.uniform(0.1, 1.0)
                got = oracle.expected_step_matrix(a, n / t * w, t)
                worst = max(worst, np.abs(got - (np.eye(n) - w * a)).max())
                cases += 1
        return worst, cases
    return _timed("unbiased-step", tol, run)


def _sequence_cases(n_values, m_max):
    for n, t in _grid(n_values):
        for m in range(1, m_max + 1):
            if math.comb(n, t) ** m <= oracle.MAX_SEQUENCES:
                yield n, t, m


def richardson_mean(seed: int = 2, n_values=range(2, 9), m_max: int = 3,
                    tol: float = 1e-12, tol_recurrence: float = 1e-13) -> tuple[Check, Check]:
    """Enumerated ``E[z_m]`` vs classical ``z_m``, and vs the mean recurrence."""
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    worst_cls, worst_rec, cases = 0.0, 0.0, 0
    fixtures = {n: oracle.random_spd(n, rng) for n in n_values}
    for n, t, m in _sequence_cases(n_values, m_max):
        a = fixtures[n]
        v, f = rng.standard_normal((2, n))
        w = 2.0 / 11.0
        wh = n / t * w
        enum = oracle.enumerate_mean_iterate(a, v, w, wh, t, m, z0=f)
        rec = oracle.exact_mean_iterate(a, v, w, wh, t, m, z0=f)
        z_m = richardson_classical(SparseMatrix.from_dense(a), v,
                                   RichardsonParams(w, m, z0=f)).final
        worst_cls = max(worst_cls, np.abs(enum - z_m).max())
        worst_rec = max(worst_rec, np.abs(enum - rec).max())
        cases += 1
    dt = time.perf_counter() - t0
    return (Check("richardson-mean-vs-classical", worst_cls, tol, dt, cases),
            Check("richardson-mean-recurrence", worst_rec, tol_recurrence, dt, cases))


def chebyshev_mean(seed: int = 3, n_values=range(2, 9), m_max: int = 3,
                   tol: float = 1e-12, tol_recurrence: float = 1e-13) -> tuple[Check, Check]:
    """Chebyshev analogue of :func:`richardson_mean` on the stacked state."""
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    worst_cls, worst_rec, cases = 0.0, 0.0, 0
    fixtures = {n: oracle.random_spd(n, rng) for n in n_values}
    eta, nu = chebyshev_coeffs(0.9, 11.0)
    for n, t, m in _sequence_cases(n_values, m_max):
        a = fixtures[n]
        v, f, g = rng.standard_normal((3, n))
        nh = n / t * nu
        d0 = np.concatenate([f, g])
        enum = np.concatenate(oracle.enumerate_mean_chebyshev(a, v, eta, nu, nh, t, m, d0))
        rec = np.concatenate(oracle.exact_mean_chebyshev(a, v, eta, nu, nh, t, m, d0))
        cls = chebyshev_classical(SparseMatrix.from_dense(a), v,
                                  ChebyshevParams(eta, nu, m, z0=f, z_minus1=g)).pair()
        worst_cls = max(worst_cls, np.abs(enum - cls).max())
        worst_rec = max(worst_rec, np.abs(enum - rec).max())
        cases += 1
    dt = time.perf_counter() - t0
    return (Check("chebyshev-mean-vs-classical", worst_cls, tol, dt, cases),
            Check("chebyshev-mean-recurrence", worst_rec, tol_recurrence, dt, cases))


def closed_form(seed: int = 4, fixtures: int = 10, n: int = 12, m_max: int = 50,
                tol: float = 1e-12) -> Check:
    """Closed-form mean for ``z_0 = omega v`` versus the mean recurrence."""
    def run():
        rng = np.random.default_rng(seed)
        worst, cases = 0.0, 0
        for _ in range(fixtures):
            a = oracle.random_spd(n, rng)
            v = rng.standard_normal(n)
            t = int(rng.integers(1, n + 1))
            w = 2.0 / 11.0
            wh = n / t * w
            for m in range(1, m_max + 1):
                cf = oracle.closed_form_mean(a, v, w, wh, t, m)
                rec = oracle.exact_mean_iterate(a, v, w, wh, t, m, z0=w * v)
                worst = max(worst, np.abs(cf - rec).max())
                cases += 1
        return worst, cases
    return _timed("closed-form-mean", tol, run)


def run_all() -> list[Check]:
    checks = [perturbation_mean(), unbiased_step()]
    checks.extend(richardson_mean())
    checks.extend(chebyshev_mean())
    checks.append(closed_form())
    return checks
