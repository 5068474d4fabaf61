"""Monte-Carlo driver: repeated straggler-tolerant runs, sample statistics
and their distance to the classical iterate and to the exact solution."""
from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .matrix import SparseMatrix, SpectralBounds, estimate_bounds, load_matrix, matvec
from .sampling import KINDS, StraggleDistribution, expected_t
from .solvers import (ChebyshevParams, RichardsonParams, chebyshev_classical,
                      chebyshev_coeffs, chebyshev_trials, correction_factor,
                      omega_cr, richardson_classical, richardson_trials,
                      solve_reference)

METHODS = ("richardson", "chebyshev")
MODES = ("classical", "straggler_corrected", "straggler_uncorrected")
INITIALS = ("zero", "gaussian", "omega_v")
CSV_COLUMNS = ("method", "mode", "tau", "m", "L", "mse_vs_zm", "mse_vs_z",
               "avg_sample_variance", "seed")
PREFIX_GRID = (1, 2, 5)


def mse(x) -> float:
    """Mean squared entry, ``sum(x_i^2) / N``."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise ValueError("mse of an empty vector")
    return float(np.dot(x, x) / x.size)


def default_prefixes(L: int) -> list[int]:
    """1, 2, 5, 10, 20, 50, ... up to and including ``L``."""
    out, scale = [], 1
    while scale <= L:
        out.extend(p * scale for p in PREFIX_GRID if p * scale <= L)
        scale *= 10
    if out[-1] != L:
        out.append(L)
    return out


@dataclass
class ExperimentConfig:
    matrix: str
    method: str = "richardson"
    mode: str = "straggler_corrected"
    tau: float = 0.9
    half_width: int = 100
    dist_kind: str = "uniform_interval"
    m_values: tuple[int, ...] = (20, 50)
    trials: int = 100
    master_seed: int = 0
    rhs: str = "ones"
    initial: str = "zero"
    initial_seed: int = 0
    bounds: tuple[float, float] | None = None
    alpha_factor: float = 0.9
    beta_factor: float = 1.1
    omega_factor: float = 1.0
    l_prefixes: tuple[int, ...] | None = None

    def __post_init__(self):
        self.m_values = tuple(int(m) for m in self.m_values)
        if self.l_prefixes is not None:
            self.l_prefixes = tuple(int(p) for p in self.l_prefixes)
        if self.bounds is not None:
            self.bounds = tuple(float(b) for b in self.bounds)
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.initial not in INITIALS:
            raise ValueError(f"initial must be one of {INITIALS}")
        if self.dist_kind not in KINDS:
            raise ValueError(f"dist_kind must be one of {KINDS}")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError(f"tau must lie in (0, 1], got {self.tau}")
        if not self.m_values or any(m < 0 for m in self.m_values):
            raise ValueError("m_values must be a nonempty list of nonnegative counts")
        if list(self.m_values) != sorted(set(self.m_values)):
            raise ValueError("m_values must be strictly ascending")
        if self.trials < 1:
            raise ValueError("trials must be positive")
        if self.l_prefixes is not None and (
                not self.l_prefixes or min(self.l_prefixes) < 1
                or max(self.l_prefixes) > self.trials):
            raise ValueError("l_prefixes must lie in [1, trials]")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("m_values", "l_prefixes", "bounds"):
            if d[k] is not None:
                d[k] = list(d[k])
        return d

    def prefixes(self) -> list[int]:
        if self.l_prefixes is not None:
            return sorted(set(self.l_prefixes))
        return default_prefixes(self.trials)


@dataclass
class TrialStatistics:
    m: int
    L: int
    sample_mean: np.ndarray
    sample_variance: np.ndarray | None
    mse_vs_zm: float
    mse_vs_z: float

    @property
    def avg_sample_variance(self) -> float:
        if self.sample_variance is None:
            return math.nan
        return float(self.sample_variance.mean())


@dataclass
class ExperimentRecord:
    config: ExperimentConfig
    metadata: dict
    statistics: list[TrialStatistics]
    references: dict = field(default_factory=dict, repr=False)
    elapsed_seconds: float = 0.0

    def get(self, m: int, L: int | None = None) -> TrialStatistics:
        L = self.config.trials if L is None else L
        for s in self.statistics:
            if s.m == m and s.L == L:
                return s
        raise KeyError((m, L))

    def rows(self) -> list[dict]:
        c = self.config
        return [{"method": c.method, "mode": c.mode, "tau": c.tau, "m": s.m, "L": s.L,
                 "mse_vs_zm": s.mse_vs_zm, "mse_vs_z": s.mse_vs_z,
                 "avg_sample_variance": s.avg_sample_variance, "seed": c.master_seed}
                for s in self.statistics]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in self.rows():
            w.writerow([repr(v) if isinstance(v, float) else v
                        for v in (row[k] for k in CSV_COLUMNS)])
        return buf.getvalue()

    def to_json(self) -> str:
        rows = [{k: (None if isinstance(v, float) and math.isnan(v) else v)
                 for k, v in r.items()} for r in self.rows()]
        doc = {"config": self.config.to_dict(), "metadata": self.metadata, "rows": rows}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def write(self, path: str) -> None:
        text = self.to_json() if str(path).endswith(".json") else self.to_csv()
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _rhs(config: ExperimentConfig, A: SparseMatrix) -> np.ndarray:
    if config.rhs == "ones":
        return matvec(A, np.ones(A.n))
    v = np.loadtxt(config.rhs, dtype=np.float64, ndmin=1)
    if v.shape != (A.n,):
        raise ValueError(f"rhs file has {v.size} entries, matrix has {A.n} rows")
    return v


def _initial(config: ExperimentConfig, n: int, omega: float, v: np.ndarray):
    if config.initial == "zero":
        return np.zeros(n)
    if config.initial == "omega_v":
        return omega * v
    return np.random.default_rng(config.initial_seed).standard_normal(n)


def within_standard_errors(mean, variance, L: int, reference, k: float = 6.0) -> float:
    """Fraction of entries with ``|mean - reference| <= k * sqrt(variance / L)``."""
    se = np.sqrt(np.asarray(variance) / L)
    return float(np.mean(np.abs(np.asarray(mean) - reference) <= k * se))


def run_trials(config: ExperimentConfig, matrix: SparseMatrix | None = None,
               threads: int | None = None) -> ExperimentRecord:
    """Run ``config.trials`` independent solver runs and summarize them.

    Trial ``k`` draws its masks from ``(master_seed, k, iteration)``, so the
    first ``l`` trials of a larger run are exactly the trials of a run with
    ``trials = l``. ``threads`` only changes how trials are scheduled.
    """
    started = time.perf_counter()
    A = load_matrix(config.matrix) if matrix is None else matrix
    N = A.n
    v = _rhs(config, A)
    if config.bounds is None:
        bounds = estimate_bounds(A)
    else:
        bounds = SpectralBounds(*config.bounds)

    dist = None
    if config.mode != "classical":
        if config.tau * N < 1:
            raise ValueError(f"tau*N = {config.tau * N} < 1")
        dist = StraggleDistribution.from_tau(config.tau, N, config.dist_kind,
                                             config.half_width)
    corrected = config.mode == "straggler_corrected"
    scale = correction_factor(dist) if corrected else 1.0

    meta = {"n": N, "nnz": A.nnz, "lambda_min": bounds.lambda_min,
            "lambda_max": bounds.lambda_max, "mse_normalization": "sum(x^2)/N",
            "distribution": None if dist is None else dist.to_dict(),
            "expected_t": None if dist is None else expected_t(dist),
            "correction": scale}
    ms = list(config.m_values)
    trials = np.arange(config.trials)
    z_star = solve_reference(A, v, bounds)

    if config.method == "richardson":
        omega = omega_cr(bounds) * config.omega_factor
        omega_hat = scale * omega
        meta.update(omega=omega, omega_hat=omega_hat)
        z0 = _initial(config, N, omega, v)
        ref = richardson_classical(A, v, RichardsonParams(omega, ms[-1], z0=z0), ms)
        z_m = ref.snapshots
        runs = None if dist is None else richardson_trials(
            A, v, omega, omega_hat, dist, config.master_seed, trials, ms, z0,
            threads=threads)
        z_ref = z_star
    else:
        alpha = config.alpha_factor * bounds.lambda_min
        beta = config.beta_factor * bounds.lambda_max
        eta, nu = chebyshev_coeffs(alpha, beta)
        nu_hat = scale * nu
        meta.update(alpha=alpha, beta=beta, eta=eta, nu=nu, nu_hat=nu_hat)
        z0 = _initial(config, N, nu, v)
        ref = chebyshev_classical(A, v, ChebyshevParams(eta, nu, ms[-1], z0=z0), ms)
        z_m = {m: ref.pair(m) for m in ms}
        runs = None if dist is None else chebyshev_trials(
            A, v, eta, nu, nu_hat, dist, config.master_seed, trials, ms, z0,
            threads=threads)
        z_ref = np.concatenate([z_star, z_star])

    stats = []
    for m in ms:
        for ell in config.prefixes():
            if runs is None:
                # every classical trial is the same deterministic run
                mean = z_m[m].copy()
                var = np.zeros_like(mean) if ell >= 2 else None
            else:
                block = runs[m][:ell]
                mean = block.mean(axis=0)
                var = block.var(axis=0, ddof=1) if ell >= 2 else None
            stats.append(TrialStatistics(m, ell, mean, var, mse(mean - z_m[m]),
                                         mse(mean - z_ref)))
    return ExperimentRecord(config, meta, stats,
                            references={"z": z_star, "z_m": z_m},
                            elapsed_seconds=time.perf_counter() - started)


def variance_sweep(config: ExperimentConfig, m_list, L: int,
                   matrix: SparseMatrix | None = None,
                   threads: int | None = None) -> ExperimentRecord:
    """Average per-entry sample variance of the iterate at each ``m`` over ``L`` trials."""
    if L < 2:
        raise ValueError("sample variance needs at least two trials")
    cfg = ExperimentConfig.from_dict({**config.to_dict(), "m_values": list(m_list),
                                      "trials": L, "l_prefixes": [L]})
    return run_trials(cfg, matrix=matrix, threads=threads)
