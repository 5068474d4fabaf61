"""Straggler-tolerant Richardson and Chebyshev iterations on sparse SPD systems,
with exact small-scale oracles and a reproducible Monte-Carlo harness."""
from .harness import (ExperimentConfig, ExperimentRecord, TrialStatistics, mse,
                      run_trials, variance_sweep)
from .matrix import (ConvergenceError, MatrixMarketError, SparseMatrix, SpectralBounds,
                     estimate_bounds, gen_laplacian_1d, gen_laplacian_3d, load_matrix,
                     load_matrix_market, matvec, write_matrix_market)
from .partial import apply_iteration_matrix, partial_matvec
from .sampling import (SeedSpec, StraggleDistribution, expected_t, sample_iteration,
                       sample_mask, sample_mask_batch, sample_t, sample_t_batch)
from .solvers import (ChebyshevParams, IterateTrace, RichardsonParams,
                      chebyshev_classical, chebyshev_coeffs, chebyshev_straggler,
                      chebyshev_trials, correction_factor, omega_cr,
                      richardson_classical, richardson_straggler, richardson_trials,
                      solve_reference)

__version__ = "0.1.0"

__all__ = [
    "ChebyshevParams", "ConvergenceError", "ExperimentConfig", "ExperimentRecord",
    "IterateTrace", "MatrixMarketError", "RichardsonParams", "SeedSpec", "SparseMatrix",
    "SpectralBounds", "StraggleDistribution", "TrialStatistics", "apply_iteration_matrix",
    "chebyshev_classical", "chebyshev_coeffs", "chebyshev_straggler", "chebyshev_trials",
    "correction_factor", "estimate_bounds", "expected_t", "gen_laplacian_1d",
    "gen_laplacian_3d", "load_matrix", "load_matrix_market", "matvec", "mse",
    "omega_cr", "partial_matvec", "richardson_classical", "richardson_straggler",
    "richardson_trials", "run_trials", "sample_iteration", "sample_mask",
    "sample_mask_batch", "sample_t", "sample_t_batch", "solve_reference", "variance_sweep",
    "write_matrix_market",
]
