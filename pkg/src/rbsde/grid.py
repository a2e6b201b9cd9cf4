"""Uniform time grids, discrete paths and deterministic barrier pairs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class BarrierGapError(ValueError):
    """Raised when a lower/upper barrier pair does not keep a positive gap."""


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    T: float
    N: int

    def __post_init__(self):
        if not np.isfinite(self.T) or self.T <= 0:
            raise ValueError(f"horizon T must be positive, got {self.T}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"number of steps N must be a positive integer, got {self.N}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "T", float(self.T))

    @property
    def dt(self) -> float:
        return self.T / self.N

    @property
    def times(self) -> np.ndarray:
        t = np.arange(self.N + 1) * self.dt
        t[-1] = self.T
        return t


def make_uniform_grid(T: float, N: int) -> TimeGrid:
    return TimeGrid(T, N)


@dataclass(frozen=True, eq=False)
class DiscretePath:
    """Real values sampled at the N+1 points of a grid."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.N + 1,):
            raise ValueError(f"path needs {self.grid.N + 1} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("path values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)

    def __getitem__(self, k):
        return self.values[k]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def _check_same_grid(*paths: DiscretePath):
    g = paths[0].grid
    for p in paths[1:]:
        if p.grid != g:
            raise GridMismatchError(f"paths live on different grids: {g} vs {p.grid}")


def sup_norm_distance(p: DiscretePath, q: DiscretePath) -> float:
    _check_same_grid(p, q)
    return float(np.max(np.abs(p.values - q.values)))


def reverse_in_time(p: DiscretePath) -> DiscretePath:
    return DiscretePath(p.grid, p.values[::-1])


# -- barriers ---------------------------------------------------------------

_BARRIER_ARITY = {"constant": 1, "affine": 2, "sinusoid": 3}


@dataclass(frozen=True)
class BarrierSpec:
    """Parametric deterministic barrier.

    constant(a) = a, affine(a, b) = a + b t, sinusoid(a, b, c) = a + b sin(c t).
    """

    kind: str
    params: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind not in _BARRIER_ARITY:
            raise ValueError(f"unknown barrier kind {self.kind!r}; expected one of {sorted(_BARRIER_ARITY)}")
        params = tuple(float(p) for p in self.params)
        if len(params) != _BARRIER_ARITY[self.kind]:
            raise ValueError(f"{self.kind} barrier takes {_BARRIER_ARITY[self.kind]} params, got {len(params)}")
        if not all(np.isfinite(params)):
            raise ValueError("barrier params must be finite")
        object.__setattr__(self, "params", params)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.full_like(t, self.params[0])
        if self.kind == "affine":
            a, b = self.params
            return a + b * t
        a, b, c = self.params
        return a + b * np.sin(c * t)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": list(self.params)}

    @classmethod
    def from_dict(cls, d: dict) -> "BarrierSpec":
        return cls(d["kind"], tuple(d.get("params", ())))


@dataclass(frozen=True, eq=False)
class BarrierPair:
    lower: DiscretePath
    upper: DiscretePath

    def __post_init__(self):
        _check_same_grid(self.lower, self.upper)
        diff = self.upper.values - self.lower.values
        if np.min(diff) <= 0:
            k = int(np.argmin(diff))
            raise BarrierGapError(
                f"barrier gap must stay positive; U - L = {diff[k]:.6g} at index {k} (t = {self.grid.times[k]:.6g})"
            )

    @property
    def grid(self) -> TimeGrid:
        return self.lower.grid

    @property
    def gap(self) -> float:
        return float(np.min(self.upper.values - self.lower.values))

    def reversed(self) -> "BarrierPair":
        return BarrierPair(reverse_in_time(self.lower), reverse_in_time(self.upper))

    def increments(self):
        """Finite-variation increments (dA^L, dA^U) of the sampled barriers."""
        return np.diff(self.lower.values), np.diff(self.upper.values)


def eval_barriers(low: BarrierSpec, high: BarrierSpec, grid: TimeGrid) -> BarrierPair:
    t = grid.times
    return BarrierPair(DiscretePath(grid, low(t)), DiscretePath(grid, high(t)))


def constant_barriers(grid: TimeGrid, lo: float, hi: float) -> BarrierPair:
    return eval_barriers(BarrierSpec("constant", (lo,)), BarrierSpec("constant", (hi,)), grid)
