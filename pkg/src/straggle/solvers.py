"""Richardson and stationary Chebyshev iterations, classical and with
straggling rows.

Every scheme evaluates its update in the same floating-point order::

    z_new = ((z - s * y) + w * v) + eta * (z - z_prev)

with ``y`` the (partial) product ``A z``. Richardson is the ``eta = 0`` case
and drops the last term. Keeping one order makes the classical limits exact:
a full mask reproduces the classical run bit for bit, and so does
Chebyshev with ``eta = 0`` against Richardson.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .matrix import (ConvergenceError, SparseMatrix, SpectralBounds, _check_vector,
                     estimate_bounds, matvec)
from .partial import apply_iteration_matrix, partial_matvec_many
from .sampling import (SeedSpec, StraggleDistribution, expected_t,
                       sample_iteration, sample_mask_batch)

_MIN_REL_GAP = 1e-9


@dataclass
class RichardsonParams:
    omega: float
    m: int
    omega_hat: float | None = None
    z0: np.ndarray | None = None

    def __post_init__(self):
        if self.m < 0:
            raise ValueError("iteration count m must be nonnegative")
        if not math.isfinite(self.omega) or self.omega == 0.0:
            raise ValueError("omega must be finite and nonzero")


@dataclass
class ChebyshevParams:
    eta: float
    nu: float
    m: int
    nu_hat: float | None = None
    z0: np.ndarray | None = None
    z_minus1: np.ndarray | None = None

    def __post_init__(self):
        if self.m < 0:
            raise ValueError("iteration count m must be nonnegative")
        if self.eta < 0:
            raise ValueError("eta must be nonnegative")

    @classmethod
    def from_bounds(cls, alpha: float, beta: float, m: int, **kw) -> "ChebyshevParams":
        eta, nu = chebyshev_coeffs(alpha, beta)
        return cls(eta=eta, nu=nu, m=m, **kw)


@dataclass
class IterateTrace:
    """Final iterate plus copies at requested iteration counts.

    ``lagged`` holds the previous iterate ``z_{m-1}`` for second-order
    schemes (``final_lagged`` for the last step); it is empty for Richardson.
    """

    final: np.ndarray
    snapshots: dict[int, np.ndarray] = field(default_factory=dict)
    final_lagged: np.ndarray | None = None
    lagged: dict[int, np.ndarray] = field(default_factory=dict)

    def pair(self, m: int | None = None) -> np.ndarray:
        """Stacked state ``[z_m; z_{m-1}]``."""
        if m is None:
            return np.concatenate([self.final, self.final_lagged])
        return np.concatenate([self.snapshots[m], self.lagged[m]])


def omega_cr(bounds: SpectralBounds) -> float:
    if bounds.lambda_min <= 0 or bounds.lambda_max <= 0:
        raise ValueError("omega_cr needs positive spectral bounds")
    return 2.0 / (bounds.lambda_min + bounds.lambda_max)


def chebyshev_coeffs(alpha: float, beta: float) -> tuple[float, float]:
    """Fixed coefficients ``(eta, nu)`` for an eigenvalue enclosure ``[alpha, beta]``."""
    if not 0 < alpha < beta:
        raise ValueError(f"need 0 < alpha < beta, got ({alpha}, {beta})")
    if beta - alpha < _MIN_REL_GAP * beta:
        raise ValueError("enclosure too narrow for stable coefficients")
    x = (alpha + beta) / (beta - alpha)
    # x - sqrt(x^2 - 1), written without cancellation
    rho = 1.0 / (x + math.sqrt(x * x - 1.0))
    delta = (alpha + beta) / 2.0
    return rho * rho, 2.0 * rho / delta


def correction_factor(dist: StraggleDistribution) -> float:
    """``N / E[T]``, the rescaling that makes the sampled product unbiased."""
    return dist.n / expected_t(dist)


def _start(A, z, default=None):
    if z is None:
        return np.zeros(A.n) if default is None else default.copy()
    return _check_vector(A, z).copy()


def _wanted(snapshots, m):
    wanted = set(int(k) for k in (snapshots or ()))
    bad = [k for k in wanted if k < 0 or k > m]
    if bad:
        raise ValueError(f"snapshot indices {sorted(bad)} outside [0, {m}]")
    return wanted


# ---------------------------------------------------------------- Richardson

def _richardson(A, v, omega, z0, m, snapshots, step_product):
    v = _check_vector(A, v)
    z = _start(A, z0)
    wanted = _wanted(snapshots, m)
    trace = IterateTrace(final=z)
    if 0 in wanted:
        trace.snapshots[0] = z.copy()
    wv = omega * v
    for i in range(1, m + 1):
        z = step_product(z, i) + wv
        if i in wanted:
            trace.snapshots[i] = z.copy()
    trace.final = z
    return trace


def richardson_classical(A: SparseMatrix, v, params: RichardsonParams,
                         snapshots=()) -> IterateTrace:
    """``z_i = z_{i-1} + omega (v - A z_{i-1})``."""
    w = params.omega
    return _richardson(A, v, w, params.z0, params.m, snapshots,
                       lambda z, i: z - w * matvec(A, z))


def richardson_straggler(A: SparseMatrix, v, params: RichardsonParams,
                         dist: StraggleDistribution, seed: SeedSpec,
                         snapshots=()) -> IterateTrace:
    """``z_i = (I - omega_hat D_{T_i} A) z_{i-1} + omega v`` with a fresh mask
    drawn from ``seed.at_iteration(i)`` at every step.

    ``omega_hat`` defaults to ``N / E[T] * omega``.
    """
    if dist.n != A.n:
        raise ValueError("distribution dimension does not match the matrix")
    wh = params.omega_hat
    if wh is None:
        wh = correction_factor(dist) * params.omega

    def step(z, i):
        mask = sample_iteration(dist, seed.at_iteration(i))
        return apply_iteration_matrix(A, z, mask, wh)

    return _richardson(A, v, params.omega, params.z0, params.m, snapshots, step)


# ---------------------------------------------------------------- Chebyshev

def _chebyshev(A, v, params, snapshots, step_product):
    v = _check_vector(A, v)
    z = _start(A, params.z0)
    z_prev = _start(A, params.z_minus1, default=z)
    wanted = _wanted(snapshots, params.m)
    trace = IterateTrace(final=z, final_lagged=z_prev)
    if 0 in wanted:
        trace.snapshots[0], trace.lagged[0] = z.copy(), z_prev.copy()
    eta, nv = params.eta, params.nu * v
    for i in range(1, params.m + 1):
        z_new = (step_product(z, i) + nv) + eta * (z - z_prev)
        z_prev, z = z, z_new
        if i in wanted:
            trace.snapshots[i], trace.lagged[i] = z.copy(), z_prev.copy()
    trace.final, trace.final_lagged = z, z_prev
    return trace


def chebyshev_classical(A: SparseMatrix, v, params: ChebyshevParams,
                        snapshots=()) -> IterateTrace:
    """``z_m = z_{m-1} + eta (z_{m-1} - z_{m-2}) + nu (v - A z_{m-1})``.

    ``z_minus1`` defaults to ``z0``.
    """
    nu = params.nu
    return _chebyshev(A, v, params, snapshots,
                      lambda z, i: z - nu * matvec(A, z))


def chebyshev_straggler(A: SparseMatrix, v, params: ChebyshevParams,
                        dist: StraggleDistribution, seed: SeedSpec,
                        snapshots=()) -> IterateTrace:
    """Chebyshev step with the product term replaced by ``nu_hat D_{T_m} A z``.

    The ``nu v`` term keeps the uncorrected ``nu``; ``nu_hat`` defaults to
    ``N / E[T] * nu``.
    """
    if dist.n != A.n:
        raise ValueError("distribution dimension does not match the matrix")
    nh = params.nu_hat
    if nh is None:
        nh = correction_factor(dist) * params.nu

    def step(z, i):
        mask = sample_iteration(dist, seed.at_iteration(i))
        return apply_iteration_matrix(A, z, mask, nh)

    return _chebyshev(A, v, params, snapshots, step)


# ---------------------------------------------------------------- many trials

CHUNK = 2048
# cap on n * chunk so the per-chunk mask keys stay around 64 MB
_CHUNK_ELEMENTS = 1 << 23


def _chunks(trials, chunk):
    trials = np.asarray(trials, dtype=np.int64)
    return [trials[i:i + chunk] for i in range(0, trials.size, chunk)]


def _run_chunked(fn, trials, threads, chunk, n):
    parts = _chunks(trials, max(1, min(chunk, _CHUNK_ELEMENTS // n)))
    if threads is None or threads <= 1 or len(parts) <= 1:
        results = [fn(p) for p in parts]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(fn, parts))
    keys = results[0].keys() if results else ()
    return {k: np.concatenate([r[k] for r in results], axis=0) for k in keys}


def _block_start(A, z, L):
    z = _start(A, z)
    return np.repeat(z[:, None], L, axis=1)


def richardson_trials(A: SparseMatrix, v, omega: float, omega_hat: float,
                      dist: StraggleDistribution | None, master_seed: int,
                      trials, snapshots, z0=None, threads: int | None = None,
                      chunk: int = CHUNK) -> dict[int, np.ndarray]:
    """Run ``richardson_straggler`` for many trial indices at once.

    Returns ``{m: array (L, N)}``; row ``k`` is bitwise equal to the single
    run with ``SeedSpec(master_seed, trials[k])``. ``dist=None`` runs the
    classical iteration in every column. Results do not depend on
    ``threads`` or ``chunk``.
    """
    v = _check_vector(A, v)
    wanted = sorted(_wanted(snapshots, max(snapshots)))
    m = wanted[-1]
    wv = (omega * v)[:, None]

    def run(part):
        Z = _block_start(A, z0, part.size)
        out = {}
        if 0 in wanted:
            out[0] = Z.T.copy()
        for i in range(1, m + 1):
            if dist is None:
                Y = A.csr @ Z
                Z = (Z - omega * Y) + wv
            else:
                masks = sample_mask_batch(dist, master_seed, part, i)
                Z = (Z - omega_hat * partial_matvec_many(A, Z, masks)) + wv
            if i in wanted:
                out[i] = Z.T.copy()
        return out

    return _run_chunked(run, trials, threads, chunk, A.n)


def chebyshev_trials(A: SparseMatrix, v, eta: float, nu: float, nu_hat: float,
                     dist: StraggleDistribution | None, master_seed: int,
                     trials, snapshots, z0=None, z_minus1=None,
                     threads: int | None = None,
                     chunk: int = CHUNK) -> dict[int, np.ndarray]:
    """Many-trial ``chebyshev_straggler``; returns ``{m: array (L, 2N)}`` of
    stacked states ``[z_m; z_{m-1}]``."""
    v = _check_vector(A, v)
    wanted = sorted(_wanted(snapshots, max(snapshots)))
    m = wanted[-1]
    nv = (nu * v)[:, None]
    base = _start(A, z0)
    base_prev = _start(A, z_minus1, default=base)

    def run(part):
        L = part.size
        Z, P = _block_start(A, base, L), _block_start(A, base_prev, L)
        out = {}
        if 0 in wanted:
            out[0] = np.vstack([Z, P]).T.copy()
        for i in range(1, m + 1):
            if dist is None:
                prod = Z - nu * (A.csr @ Z)
            else:
                masks = sample_mask_batch(dist, master_seed, part, i)
                prod = Z - nu_hat * partial_matvec_many(A, Z, masks)
            Z, P = (prod + nv) + eta * (Z - P), Z
            if i in wanted:
                out[i] = np.vstack([Z, P]).T.copy()
        return out

    return _run_chunked(run, trials, threads, chunk, A.n)


def solve_reference(A: SparseMatrix, v, bounds: SpectralBounds | None = None,
                    rtol: float = 1e-12, dense_max: int = 2000,
                    max_iter: int = 100000, check_every: int = 25) -> np.ndarray:
    """High-accuracy solution of ``A z = v`` for an SPD ``A``.

    Dense LU for ``n <= dense_max``; otherwise classical Chebyshev on a
    slightly widened enclosure, run until the relative residual is below
    ``rtol``.
    """
    v = _check_vector(A, v)
    if A.n <= dense_max:
        return np.linalg.solve(A.to_dense(), v)
    if bounds is None:
        bounds = estimate_bounds(A)
    eta, nu = chebyshev_coeffs(0.99 * bounds.lambda_min, 1.01 * bounds.lambda_max)
    z = np.zeros(A.n)
    z_prev = z.copy()
    vnorm = np.linalg.norm(v)
    res = vnorm
    for it in range(1, max_iter + 1):
        z, z_prev = ((z - nu * matvec(A, z)) + nu * v) + eta * (z - z_prev), z
        if it % check_every == 0:
            res = np.linalg.norm(v - matvec(A, z))
            if res <= rtol * vnorm:
                return z
    raise ConvergenceError(
        f"reference solve stalled at relative residual {res / vnorm:.3e}",
        last_iterate=z, last_value=res)
