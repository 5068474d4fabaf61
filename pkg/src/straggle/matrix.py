"""Square sparse matrices in compressed-row form, Matrix Market I/O, model
problems and power-iteration spectral bounds."""
from __future__ import annotations

import os
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

# int64 offsets; keep well inside what the row kernels accept
MAX_NNZ = 2**31 - 1


class MatrixMarketError(ValueError):
    """Base class for Matrix Market parse failures."""


class MatrixMarketHeaderError(MatrixMarketError):
    pass


class NonSquareMatrixError(MatrixMarketError):
    pass


class IndexOutOfBoundsError(MatrixMarketError):
    pass


class ConvergenceError(RuntimeError):
    """An iteration stopped before reaching its tolerance."""

    def __init__(self, message, last_iterate=None, last_value=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.last_value = last_value


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Immutable square matrix in CSR layout with sorted column indices."""

    n: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "row_offsets", _frozen(self.row_offsets, np.int64))
        object.__setattr__(self, "col_indices", _frozen(self.col_indices, np.int64))
        object.__setattr__(self, "values", _frozen(self.values, np.float64))
        ro, ci = self.row_offsets, self.col_indices
        if self.n < 1:
            raise ValueError("matrix dimension must be positive")
        if ro.shape != (self.n + 1,) or ro[0] != 0 or ro[-1] != ci.size:
            raise ValueError("row_offsets inconsistent with stored entries")
        if ci.size != self.values.size:
            raise ValueError("col_indices and values differ in length")
        if np.any(np.diff(ro) < 0):
            raise ValueError("row_offsets must be nondecreasing")
        if ci.size and (ci.min() < 0 or ci.max() >= self.n):
            raise ValueError("column index out of range")
        if ci.size > 1:
            # strictly increasing within each row
            step = np.diff(ci)
            row_starts = np.zeros(ci.size, dtype=bool)
            row_starts[ro[1:-1][ro[1:-1] < ci.size]] = True
            if np.any((step <= 0) & ~row_starts[1:]):
                raise ValueError("column indices must be strictly increasing per row")

    @property
    def nnz(self) -> int:
        return int(self.values.size)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    @cached_property
    def csr(self) -> sp.csr_matrix:
        """Read-only scipy view used by the row kernels."""
        m = sp.csr_matrix((self.values, self.col_indices, self.row_offsets),
                          shape=self.shape, copy=False)
        m.has_sorted_indices = True
        return m

    @classmethod
    def from_coo(cls, n, rows, cols, vals) -> "SparseMatrix":
        """Build from triplets; duplicates are summed in input order."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if rows.size and (rows.min() < 0 or rows.max() >= n or cols.min() < 0
                          or cols.max() >= n):
            raise IndexError("triplet index outside the matrix")
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if rows.size:
            new = np.ones(rows.size, dtype=bool)
            new[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
            starts = np.flatnonzero(new)
            vals = np.add.reduceat(vals, starts)
            rows, cols = rows[starts], cols[starts]
        offsets = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n), out=offsets[1:])
        return cls(n, offsets, cols, vals)

    @classmethod
    def from_dense(cls, a) -> "SparseMatrix":
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("expected a square 2-D array")
        rows, cols = np.nonzero(a)
        return cls.from_coo(a.shape[0], rows, cols, a[rows, cols])

    @classmethod
    def from_scipy(cls, m) -> "SparseMatrix":
        m = sp.csr_matrix(m, dtype=np.float64)
        if m.shape[0] != m.shape[1]:
            raise ValueError("expected a square matrix")
        m.sum_duplicates()
        m.sort_indices()
        return cls(m.shape[0], m.indptr, m.indices, m.data)

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        return cls(n, np.arange(n + 1), np.arange(n), np.ones(n))

    @classmethod
    def diag(cls, d) -> "SparseMatrix":
        d = np.asarray(d, dtype=np.float64)
        return cls(d.size, np.arange(d.size + 1), np.arange(d.size), d)

    def to_dense(self) -> np.ndarray:
        return self.csr.toarray()

    def diagonal(self) -> np.ndarray:
        return self.csr.diagonal()

    def __matmul__(self, f):
        return matvec(self, f)


def _check_vector(A: SparseMatrix, f) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 1 or f.shape[0] != A.n:
        raise ValueError(f"vector of shape {f.shape} does not match dimension {A.n}")
    return f


def matvec(A: SparseMatrix, f) -> np.ndarray:
    """Full product ``A f``; each row accumulates its entries left to right."""
    f = _check_vector(A, f)
    return A.csr @ f


def matvec_many(A: SparseMatrix, F: np.ndarray) -> np.ndarray:
    """``A F`` for an ``(n, L)`` block; column k equals ``matvec(A, F[:, k])``."""
    F = np.ascontiguousarray(F, dtype=np.float64)
    if F.ndim != 2 or F.shape[0] != A.n:
        raise ValueError(f"block of shape {F.shape} does not match dimension {A.n}")
    return A.csr @ F


# ---------------------------------------------------------------- Matrix Market

def _parse_header(line: str) -> str:
    parts = line.strip().split()
    if len(parts) != 5 or parts[0] != "%%MatrixMarket":
        raise MatrixMarketHeaderError(f"bad banner line: {line.strip()!r}")
    obj, fmt, field_, symmetry = (p.lower() for p in parts[1:])
    if obj != "matrix" or fmt != "coordinate":
        raise MatrixMarketHeaderError(f"unsupported object/format: {obj} {fmt}")
    if field_ not in ("real", "integer", "double"):
        raise MatrixMarketHeaderError(f"unsupported field type: {field_}")
    if symmetry not in ("general", "symmetric"):
        raise MatrixMarketHeaderError(f"unsupported symmetry: {symmetry}")
    return symmetry


def load_matrix_market(path) -> SparseMatrix:
    """Read a real coordinate Matrix Market file into full CSR storage.

    Symmetric files are expanded (off-diagonal entries mirrored), duplicate
    entries are summed, and rows are sorted by column.
    """
    with open(path, "r") as fh:
        symmetry = _parse_header(fh.readline())
        line = fh.readline()
        while line and (line.startswith("%") or not line.strip()):
            line = fh.readline()
        try:
            nrows, ncols, nent = (int(x) for x in line.split())
        except ValueError:
            raise MatrixMarketHeaderError(f"bad size line: {line.strip()!r}") from None
        if nrows != ncols:
            raise NonSquareMatrixError(f"matrix is {nrows}x{ncols}, not square")
        if nrows < 1 or nent < 0:
            raise MatrixMarketHeaderError("size line must give positive dimensions")
        body = fh.read()

    tokens = body.split()
    if len(tokens) != 3 * nent:
        raise MatrixMarketError(
            f"expected {nent} entries (3 fields each), found {len(tokens)} fields")
    try:
        data = np.array(tokens, dtype=np.float64).reshape(nent, 3)
    except ValueError as exc:
        raise MatrixMarketError(f"non-numeric entry: {exc}") from None
    idx = data[:, :2]
    if np.any(idx != np.floor(idx)):
        raise MatrixMarketError("non-integer index")
    rows = idx[:, 0].astype(np.int64) - 1
    cols = idx[:, 1].astype(np.int64) - 1
    vals = data[:, 2]
    bad = (rows < 0) | (rows >= nrows) | (cols < 0) | (cols >= ncols)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise IndexOutOfBoundsError(
            f"entry {k + 1} ({rows[k] + 1}, {cols[k] + 1}) outside {nrows}x{ncols}")
    if symmetry == "symmetric":
        off = rows != cols
        rows, cols, vals = (np.concatenate([rows, cols[off]]),
                            np.concatenate([cols, rows[off]]),
                            np.concatenate([vals, vals[off]]))
    return SparseMatrix.from_coo(nrows, rows, cols, vals)


def write_matrix_market(A: SparseMatrix, path, comment: str | None = None) -> None:
    """Write ``A`` in general coordinate form with round-trip exact values."""
    rows = np.repeat(np.arange(A.n), np.diff(A.row_offsets))
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        if comment:
            for line in comment.splitlines():
                fh.write(f"% {line}\n")
        fh.write(f"{A.n} {A.n} {A.nnz}\n")
        fh.writelines(
            f"{i + 1} {j + 1} {x!r}\n"
            for i, j, x in zip(rows.tolist(), A.col_indices.tolist(), A.values.tolist())
        )


def load_matrix(source: str) -> SparseMatrix:
    """Resolve a matrix source: a ``.mtx`` path, ``laplacian3d:<n>`` or ``laplacian1d:<n>``."""
    kind, _, arg = source.partition(":")
    if kind == "laplacian3d" and arg:
        return gen_laplacian_3d(int(arg))
    if kind == "laplacian1d" and arg:
        return gen_laplacian_1d(int(arg))
    if not os.path.exists(source):
        raise FileNotFoundError(source)
    return load_matrix_market(source)


# ---------------------------------------------------------------- model problems

def gen_laplacian_1d(n: int) -> SparseMatrix:
    """Tridiagonal ``[-1, 2, -1]`` with Dirichlet ends."""
    if n < 1:
        raise ValueError("n must be positive")
    T = sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1])
    return SparseMatrix.from_scipy(T)


def gen_laplacian_3d(n_per_dim: int) -> SparseMatrix:
    """7-point Dirichlet Laplacian on an ``n^3`` grid, unscaled (diagonal 6).

    Grid point ``(i, j, k)`` maps to row ``i + n*j + n*n*k``.
    """
    n = int(n_per_dim)
    if n < 1:
        raise ValueError("n_per_dim must be positive")
    N = n**3
    if 7 * N > MAX_NNZ:
        raise OverflowError(f"{n}^3 grid exceeds the supported matrix size")
    T = sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1])
    I = sp.identity(n)
    L = (sp.kron(I, sp.kron(I, T)) + sp.kron(I, sp.kron(T, I))
         + sp.kron(T, sp.kron(I, I)))
    return SparseMatrix.from_scipy(L)


# ---------------------------------------------------------------- spectral bounds

@dataclass(frozen=True)
class SpectralBounds:
    lambda_min: float
    lambda_max: float

    def __post_init__(self):
        if not (np.isfinite(self.lambda_min) and np.isfinite(self.lambda_max)):
            raise ValueError("spectral bounds must be finite")
        if self.lambda_min > self.lambda_max:
            raise ValueError("lambda_min exceeds lambda_max")


def _start_vector(n: int, seed: int) -> np.ndarray:
    x = np.random.default_rng(seed).standard_normal(n)
    return x / np.linalg.norm(x)


def _power_iteration(op, n, tol, max_iter, seed, what):
    x = _start_vector(n, seed)
    theta = 0.0
    for _ in range(max_iter):
        y = op(x)
        theta = float(x @ y)
        res = np.linalg.norm(y - theta * x)
        if res <= tol * abs(theta) or res == 0.0:
            return theta, x
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0, x
        x = y / ny
    raise ConvergenceError(
        f"power iteration for {what} did not reach tol={tol} in {max_iter} steps",
        last_iterate=x, last_value=theta)


def check_symmetric(A: SparseMatrix, seed: int = 0, rtol: float = 1e-10) -> bool:
    """Cheap randomized test ``x'Ay == y'Ax``."""
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal((2, A.n))
    a, b = x @ matvec(A, y), y @ matvec(A, x)
    scale = np.linalg.norm(x) * np.linalg.norm(y) * np.abs(A.values).max(initial=0.0)
    return abs(a - b) <= rtol * max(scale, 1e-300) * np.sqrt(A.n)


def estimate_bounds(A: SparseMatrix, tol: float = 1e-8, max_iter: int = 20000,
                    seed: int = 0) -> SpectralBounds:
    """Extreme eigenvalues of an SPD matrix by power iteration.

    The largest comes from ``A`` directly, the smallest from ``sigma*I - A``
    with ``sigma = lambda_max * (1 + tol)``. Iterations stop once the
    eigen-residual is below ``tol`` relative to the Rayleigh quotient.
    """
    if not check_symmetric(A, seed):
        raise ValueError("estimate_bounds requires a symmetric matrix")
    lmax, _ = _power_iteration(lambda x: matvec(A, x), A.n, tol, max_iter, seed,
                               "lambda_max")
    sigma = lmax * (1.0 + tol)
    mu, _ = _power_iteration(lambda x: sigma * x - matvec(A, x), A.n, tol,
                             max_iter, seed + 1, "lambda_min")
    lmin = sigma - mu
    if lmin <= 0.0:
        raise ValueError(f"estimated lambda_min={lmin} is not positive; A is not SPD")
    return SpectralBounds(min(lmin, lmax), lmax)
