"""Random number of returned rows and the uniform row subset they index.

All randomness is drawn from a counter-based generator: a 64-bit key is
derived from ``(master_seed, trial_index, iteration_index)`` with the
SplitMix64 finalizer, and the k-th draw of that stream is the SplitMix64
output for state ``key + (k + 1) * GOLDEN``. Draw 0 selects the number of rows
``T``; draws ``1 .. n`` are per-row sort keys, and the mask is the set of rows
holding the ``T`` smallest keys. Because every draw is a pure function of its
coordinates, trials can be evaluated in any order, one at a time or as a
vectorised batch, and produce identical samples.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_TWO_NEG53 = 1.0 / (1 << 53)

Kind = Literal["uniform_interval", "fixed", "full"]
KINDS = ("uniform_interval", "fixed", "full")


def _mix64(x):
    """SplitMix64 output function on uint64 arrays (wrapping arithmetic)."""
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = x + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def _u64(value) -> np.ndarray:
    if isinstance(value, (int, np.integer)):
        return np.asarray(int(value) & _MASK64, dtype=np.uint64)
    arr = np.asarray(value)
    if arr.dtype == np.uint64:
        return arr
    return arr.astype(np.int64).astype(np.uint64)


def stream_key(master_seed: int, trial_index, iteration_index) -> np.ndarray:
    """Key of the (seed, trial, iteration) stream; broadcasts over trials."""
    k = _mix64(_u64(master_seed))
    k = _mix64(k ^ _u64(trial_index))
    return _mix64(k ^ _u64(iteration_index))


def stream_draws(key, start: int, count: int) -> np.ndarray:
    """Draws ``start .. start+count-1`` of each keyed stream.

    ``key`` of shape ``(L,)`` gives an ``(L, count)`` uint64 array.
    """
    key = np.asarray(key, dtype=np.uint64)
    counters = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        states = key[..., None] + counters * _GOLDEN
    return _mix64(states)


def _to_unit(draws: np.ndarray) -> np.ndarray:
    return (draws >> np.uint64(11)).astype(np.float64) * _TWO_NEG53


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    trial_index: int = 0
    iteration_index: int = 0

    def key(self) -> np.ndarray:
        return stream_key(self.master_seed, self.trial_index, self.iteration_index)

    def at_iteration(self, iteration_index: int) -> "SeedSpec":
        return SeedSpec(self.master_seed, self.trial_index, iteration_index)


@dataclass(frozen=True)
class StraggleDistribution:
    """Law of the number ``T`` of rows returned by one partial product.

    ``uniform_interval`` draws ``T`` uniformly from the integers in
    ``[expected_t - half_width, expected_t + half_width]`` and clamps each draw
    into ``[1, n]``; ``fixed`` always returns ``round(expected_t)``; ``full``
    always returns ``n`` (the classical product).
    """

    kind: Kind
    n: int
    expected_t: float | None = None
    half_width: int = 100

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if self.n < 1:
            raise ValueError("dimension n must be positive")
        if self.half_width < 0:
            raise ValueError("half_width must be nonnegative")
        if self.kind != "full":
            if self.expected_t is None:
                raise ValueError(f"kind={self.kind} needs expected_t")
            if not (1.0 <= self.expected_t <= self.n):
                raise ValueError(
                    f"expected_t={self.expected_t} outside [1, {self.n}]"
                )

    @classmethod
    def from_tau(cls, tau: float, n: int, kind: Kind = "uniform_interval",
                 half_width: int = 100) -> "StraggleDistribution":
        if not 0.0 < tau <= 1.0:
            raise ValueError(f"tau must lie in (0, 1], got {tau}")
        if kind == "full":
            return cls("full", n)
        return cls(kind, n, tau * n, half_width)

    def raw_interval(self) -> tuple[int, int]:
        """Integer support before clamping."""
        c = float(self.expected_t)
        return math.ceil(c - self.half_width), math.floor(c + self.half_width)

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        """Values of ``T`` and their probabilities after clamping."""
        if self.kind == "full":
            return np.array([self.n]), np.array([1.0])
        if self.kind == "fixed":
            return np.array([_fixed_t(self)]), np.array([1.0])
        lo, hi = self.raw_interval()
        raw = np.clip(np.arange(lo, hi + 1), 1, self.n)
        values, counts = np.unique(raw, return_counts=True)
        return values, counts / counts.sum()

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n": self.n, "expected_t": self.expected_t,
                "half_width": self.half_width}


def _fixed_t(dist: StraggleDistribution) -> int:
    return int(min(max(math.floor(dist.expected_t + 0.5), 1), dist.n))


def expected_t(dist: StraggleDistribution) -> float:
    """Exact mean of ``T`` under the clamped law."""
    if dist.kind == "full":
        return float(dist.n)
    if dist.kind == "fixed":
        return float(_fixed_t(dist))
    lo, hi = dist.raw_interval()
    raw = np.clip(np.arange(lo, hi + 1), 1, dist.n)
    return math.fsum(raw.tolist()) / raw.size


def _t_from_draws(dist: StraggleDistribution, draws: np.ndarray) -> np.ndarray:
    if dist.kind == "full":
        return np.full(draws.shape, dist.n, dtype=np.int64)
    if dist.kind == "fixed":
        return np.full(draws.shape, _fixed_t(dist), dtype=np.int64)
    lo, hi = dist.raw_interval()
    width = hi - lo + 1
    offset = np.minimum(np.floor(_to_unit(draws) * width).astype(np.int64), width - 1)
    return np.clip(lo + offset, 1, dist.n)


def sample_t(dist: StraggleDistribution, seed: SeedSpec) -> int:
    draw = stream_draws(seed.key(), 0, 1)[..., 0]
    return int(_t_from_draws(dist, draw))


def sample_t_batch(dist: StraggleDistribution, master_seed: int, trials,
                   iteration_index: int) -> np.ndarray:
    """``sample_t`` for many trial indices at one iteration."""
    keys = stream_key(master_seed, np.asarray(trials), iteration_index)
    return _t_from_draws(dist, stream_draws(keys, 0, 1)[:, 0])


def sample_mask(t: int, n: int, seed: SeedSpec) -> np.ndarray:
    """Uniformly random sorted ``t``-subset of ``range(n)``."""
    if not 1 <= t <= n:
        raise ValueError(f"mask size t={t} outside [1, {n}]")
    if t == n:
        return np.arange(n, dtype=np.int64)
    keys = stream_draws(seed.key(), 1, n)
    chosen = np.argsort(keys, kind="stable")[:t]
    return np.sort(chosen).astype(np.int64)


def sample_iteration(dist: StraggleDistribution, seed: SeedSpec) -> np.ndarray:
    """Sample ``T`` and then the row subset, as one iteration of the solver does."""
    return sample_mask(sample_t(dist, seed), dist.n, seed)


def sample_mask_batch(dist: StraggleDistribution, master_seed: int,
                      trials: np.ndarray, iteration_index: int) -> np.ndarray:
    """Boolean ``(n, L)`` masks for many trials at one iteration.

    Column ``k`` selects exactly the rows returned by ``sample_iteration`` for
    ``SeedSpec(master_seed, trials[k], iteration_index)``.
    """
    trials = np.asarray(trials)
    n = dist.n
    keys = stream_key(master_seed, trials, iteration_index)
    t = sample_t_batch(dist, master_seed, trials, iteration_index)
    if dist.kind == "full" or np.all(t == n):
        return np.ones((n, trials.size), dtype=bool)
    row_keys = stream_draws(keys, 1, n)
    order = np.argsort(row_keys, axis=1, kind="stable")
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.arange(n)[None, :], axis=1)
    return np.ascontiguousarray((ranks < t[:, None]).T)
