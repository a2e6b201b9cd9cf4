"""Exact binary path space for a one-dimensional Brownian driver.

Every path omega in {0, ..., 2**N - 1} is a sequence of N coin flips; flip j
(0-based) is bit N-1-j of omega, 1 meaning dW = +sqrt(dt).  With this
ordering the paths sharing a prefix of length k form a contiguous block of
2**(N-k) indices, so E[. | F_k] is a reshape and a mean.

Processes are plain arrays of shape (N+1, 2**N): row k holds the value at
time t_k on every path.  An adapted process is one whose row k is constant on
each prefix block; a raw process carries no such restriction.
"""

from __future__ import annotations

import numpy as np

from .grid import TimeGrid

DEFAULT_MAX_DEPTH = 16


class TreeDepthError(ValueError):
    pass


class NotAMartingaleError(ValueError):
    pass


class PathTree:
    def __init__(self, grid: TimeGrid, max_depth: int = DEFAULT_MAX_DEPTH):
        if grid.N > max_depth:
            raise TreeDepthError(f"tree depth {grid.N} exceeds cap {max_depth} ({2 ** grid.N} paths)")
        self.grid = grid
        self.N = grid.N
        self.n_paths = 2 ** grid.N
        self.dt = grid.dt
        self.sqrt_dt = np.sqrt(grid.dt)
        omega = np.arange(self.n_paths)
        up = (omega[None, :] >> (self.N - 1 - np.arange(self.N))[:, None]) & 1
        self.dW = np.where(up == 1, self.sqrt_dt, -self.sqrt_dt)
        self.W = np.vstack([np.zeros(self.n_paths), np.cumsum(self.dW, axis=0)])
        self.prob = 1.0 / self.n_paths

    def __repr__(self):
        return f"PathTree(T={self.grid.T}, N={self.N}, paths={self.n_paths})"

    @property
    def shape(self):
        return (self.N + 1, self.n_paths)

    def block(self, k: int) -> int:
        return self.n_paths >> k

    def nodes(self, values_k: np.ndarray, k: int) -> np.ndarray:
        """Node values (one per length-k prefix) of an F_k-measurable row."""
        return np.asarray(values_k)[:: self.block(k)]

    def expand(self, node_values: np.ndarray, k: int) -> np.ndarray:
        return np.repeat(np.asarray(node_values, dtype=float), self.block(k))

    def cond(self, values: np.ndarray, k: int) -> np.ndarray:
        """E[values | F_k] as a per-path row."""
        node_means = np.asarray(values, dtype=float).reshape(2**k, -1).mean(axis=1)
        return self.expand(node_means, k)

    def expect(self, values: np.ndarray) -> float:
        return float(np.mean(values))

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def is_adapted(self, X: np.ndarray, atol: float = 0.0) -> bool:
        X = np.asarray(X, dtype=float)
        for k in range(self.N + 1):
            blocks = X[k].reshape(2**k, -1)
            if np.max(np.abs(blocks - blocks[:, :1])) > atol:
                return False
        return True

    def from_nodes(self, node_rows) -> np.ndarray:
        """Build an adapted process from a list of node arrays, row k of length 2**k."""
        return np.vstack([self.expand(v, k) for k, v in enumerate(node_rows)])


def build_tree(grid: TimeGrid, max_depth: int = DEFAULT_MAX_DEPTH) -> PathTree:
    return PathTree(grid, max_depth)


def conditional_expectation(tree: PathTree, X_m: np.ndarray, k: int, m: int | None = None) -> np.ndarray:
    """E[X_m | F_k] for an F_m-measurable row X_m, returned per path."""
    m = tree.N if m is None else m
    if not 0 <= k <= m <= tree.N:
        raise ValueError(f"need 0 <= k <= m <= N, got k={k}, m={m}, N={tree.N}")
    return tree.cond(X_m, k)


def optional_projection(tree: PathTree, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return np.vstack([tree.cond(X[k], k) for k in range(tree.N + 1)])


def dual_optional_projection(tree: PathTree, A: np.ndarray, nondecreasing: bool = False) -> np.ndarray:
    """Discrete dual optional projection: A^o_0 = E[A_0 | F_0], dA^o_k = E[dA_k | F_k]."""
    A = np.asarray(A, dtype=float)
    dA = np.diff(A, axis=0, prepend=0.0)
    if nondecreasing and np.any(dA[1:] < 0):
        k, w = np.argwhere(dA[1:] < 0)[0]
        raise ValueError(f"process declared nondecreasing decreases at step {k + 1} on path {w}")
    return np.cumsum(optional_projection(tree, dA), axis=0)


def martingale_representation(tree: PathTree, M: np.ndarray, atol: float = 1e-12) -> np.ndarray:
    """Integrand Z of an adapted martingale: M_k = M_0 + sum_{j<k} Z_j dW_{j+1}.

    Z_k = (M_{k+1}(prefix + up) - M_{k+1}(prefix + down)) / (2 sqrt(dt)); row N is zero.
    """
    M = np.asarray(M, dtype=float)
    scale = max(1.0, float(np.max(np.abs(M))))
    Z = np.zeros_like(M)
    for k in range(tree.N):
        drift = tree.cond(M[k + 1], k) - M[k]
        if np.max(np.abs(drift)) > atol * scale:
            raise NotAMartingaleError(f"E[M_{k + 1} | F_{k}] differs from M_{k} by {np.max(np.abs(drift)):.3g}")
        Z[k] = tree.cond(M[k + 1] * tree.dW[k], k) / tree.dt
    return Z


def stochastic_integral(tree: PathTree, Z: np.ndarray) -> np.ndarray:
    """I_k = sum_{j<k} Z_j dW_{j+1}."""
    Z = np.asarray(Z, dtype=float)
    out = np.zeros(tree.shape)
    out[1:] = np.cumsum(Z[: tree.N] * tree.dW, axis=0)
    return out
