"""Continuous-dependence, mesh-refinement and local-time studies."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import BarrierSpec, DiscretePath, constant_barriers, eval_barriers, make_uniform_grid
from .local_time import default_eps, k_from_local_times, relative_rmse
from .skorohod import oracle_batch, xi_max_batch, xi_slaby_batch
from .solver import (
    DriverSpec,
    PicardConfig,
    Scenario,
    ScenarioError,
    TerminalSpec,
    UnsupportedDriverError,
    backward_induction_oracle,
    solve_picard,
    validate_scenario,
)
from .tree import DEFAULT_MAX_DEPTH, TreeDepthError, build_tree

CONVERGENCE_SLACK = 1.5
CONVERGENCE_FLOOR = 1e-12
MAX_WALK_MESH = 2**14


class NonConvergenceError(RuntimeError):
    pass


@dataclass
class DependenceReport:
    eps: list
    E_xi_hat_sq: list
    lhs: list
    ratio: list

    @property
    def C_hat(self) -> float:
        """Largest finite ratio; nan when no epsilon gave a nonzero perturbation."""
        r = [x for x in self.ratio if np.isfinite(x)]
        return float(max(r)) if r else float("nan")

    def rows(self):
        return list(zip(self.eps, self.E_xi_hat_sq, self.lhs, self.ratio))


def _difference_norms(q1, q2, dt: float) -> float:
    N = q1.Y.shape[0] - 1
    dY = q1.Y - q2.Y
    dK = (q1.Kl - q2.Kl) - (q1.Ku - q2.Ku)
    dZ = q1.Z - q2.Z
    sup_y = np.mean(np.max(dY**2, axis=0))
    sup_k = np.mean(np.max(dK**2, axis=0))
    int_z = np.mean(np.sum(dZ[:N] ** 2, axis=0) * dt)
    return float(sup_y + sup_k + int_z)


def dependence_study(scn: Scenario, perturbation: TerminalSpec, eps_list, cfg: PicardConfig | None = None):
    """Solve with xi and xi + eps * delta for each eps and compare the solutions on the tree.

    Every perturbed terminal is validated before any solve; the first one
    leaving the barriers raises ScenarioError naming its eps.
    """
    cfg = cfg or PicardConfig()
    delta = perturbation.evaluate(scn.tree)
    perturbed = []
    for eps in eps_list:
        eps = float(eps)
        try:
            perturbed.append((eps, validate_scenario(scn.tree, scn.barriers, scn.driver, scn.xi + eps * delta)))
        except ScenarioError as e:
            raise ScenarioError(f"perturbation eps={eps!r} breaks the barriers: {e}") from None

    base, rep = solve_picard(scn, cfg)
    if not rep.converged:
        raise NonConvergenceError("base problem did not converge")
    out = DependenceReport([], [], [], [])
    for eps, s2 in perturbed:
        q2, rep2 = solve_picard(s2, cfg)
        if not rep2.converged:
            raise NonConvergenceError(f"perturbed problem eps={eps!r} did not converge")
        xi_sq = float(np.mean((scn.xi - s2.xi) ** 2))
        lhs = _difference_norms(base, q2, scn.tree.dt)
        out.eps.append(eps)
        out.E_xi_hat_sq.append(xi_sq)
        out.lhs.append(lhs)
        out.ratio.append(lhs / xi_sq if xi_sq > 0 else float("nan"))
    return out


@dataclass(frozen=True)
class ScenarioSpec:
    """Mesh-free description of a scenario; ``build(N)`` puts it on a tree."""

    T: float
    lower: BarrierSpec
    upper: BarrierSpec
    driver: DriverSpec
    terminal: TerminalSpec

    def build(self, N: int, max_depth: int = DEFAULT_MAX_DEPTH) -> Scenario:
        grid = make_uniform_grid(self.T, N)
        tree = build_tree(grid, max_depth)
        return validate_scenario(tree, eval_barriers(self.lower, self.upper, grid), self.driver, self.terminal)


@dataclass
class ConvergenceTable:
    N: list
    error: list

    @property
    def monotone(self) -> bool:
        """Errors non-increasing up to the slack factor; values below the floor count as zero."""
        e = [max(x, CONVERGENCE_FLOOR) for x in self.error]
        return all(b <= CONVERGENCE_SLACK * a for a, b in zip(e, e[1:]))

    def rows(self):
        return list(zip(self.N, self.error))


def convergence_study(spec: ScenarioSpec, N_list, cfg: PicardConfig | None = None) -> ConvergenceTable:
    """Sup-node distance between the Picard fixed point and the backward-induction oracle per mesh."""
    if spec.driver.L2 != 0:
        raise UnsupportedDriverError("mesh study needs a driver independent of k (L2 = 0)")
    for N in N_list:
        if N > DEFAULT_MAX_DEPTH:
            raise TreeDepthError(f"mesh N={N} exceeds the tree depth cap {DEFAULT_MAX_DEPTH}")
    cfg = cfg or PicardConfig()
    table = ConvergenceTable([], [])
    for N in N_list:
        scn = spec.build(N)
        quad, rep = solve_picard(scn, cfg)
        if not rep.converged:
            raise NonConvergenceError(f"Picard iteration did not converge at N={N}")
        oracle = backward_induction_oracle(scn)
        table.N.append(int(N))
        table.error.append(float(np.max(np.abs(quad.Y - oracle.Y))))
    return table


# -- Skorohod map cross-checks -------------------------------------------------


def zigzag_paths(rng, n_paths: int, lo: np.ndarray, hi: np.ndarray, knot_every: int = 4, scale: float = 1.0):
    """Piecewise-linear zigzags starting inside [lo_0, hi_0].

    Knots sit every ``knot_every`` steps; knot increments are uniform on
    [-s, s] with s = scale * (max hi - min lo), which is wide enough for most
    paths to hit both barriers.
    """
    n1 = len(lo)
    n_knots = -(-(n1 - 1) // knot_every) + 1
    s = scale * float(np.max(hi) - np.min(lo))
    x0 = rng.uniform(lo[0], hi[0], size=(n_paths, 1))
    knots = x0 + np.concatenate([np.zeros((n_paths, 1)), np.cumsum(rng.uniform(-s, s, size=(n_paths, n_knots - 1)), axis=1)], axis=1)
    pos = np.arange(n1) / knot_every
    i = np.minimum(pos.astype(int), n_knots - 2)
    w = pos - i
    return knots[:, i] * (1.0 - w) + knots[:, i + 1] * w


def esm_check_batch(x: np.ndarray, x2: np.ndarray, lo: np.ndarray, hi: np.ndarray, lipschitz_constant: float = 1.0) -> dict:
    """Per-path agreement, Lipschitz and flat-off diagnostics for rows of x (paired with rows of x2)."""
    xi_m = xi_max_batch(x, lo, hi)
    xi_s = xi_slaby_batch(x, lo, hi)
    y, dl, du = oracle_batch(x, lo, hi)
    y2 = x2 - xi_max_batch(x2, lo, hi)
    y_m = x - xi_m
    return {
        "max_formula_vs_slaby_gap": np.max(np.abs(xi_m - xi_s), axis=-1),
        "max_formula_vs_oracle_gap": np.max(np.abs(y_m - y), axis=-1),
        "lipschitz_gap": lipschitz_constant * np.max(np.abs(x - x2), axis=-1) - np.max(np.abs(y_m - y2), axis=-1),
        "flat_off_residual_l": np.sum((y - lo) * dl, axis=-1),
        "flat_off_residual_u": np.sum((hi - y) * du, axis=-1),
    }


# -- local time ---------------------------------------------------------------


def reflected_walks(n_paths: int, N: int, lo: float, hi: float, start: float, T: float, rng):
    """Gaussian random walks started at ``start`` and reflected into [lo, hi].

    Returns (x, y, xi): raw walks, reflected paths and the regulator Xi = x - y,
    each of shape (n_paths, N+1).
    """
    dt = T / N
    inc = rng.normal(0.0, np.sqrt(dt), size=(n_paths, N))
    x = start + np.concatenate([np.zeros((n_paths, 1)), np.cumsum(inc, axis=1)], axis=1)
    lo_v = np.full(N + 1, float(lo))
    hi_v = np.full(N + 1, float(hi))
    y, _, _ = oracle_batch(x, lo_v, hi_v)
    return x, y, xi_max_batch(x, lo_v, hi_v)


def local_time_study(mesh_list, n_paths: int, seed: int, lo: float = 0.0, hi: float = 1.0, start: float | None = None, T: float = 1.0):
    """Mean relative RMSE between the local-time reconstruction of K and the regulator, per mesh.

    Each mesh draws from its own stream seeded by (seed, N), so adding a mesh
    does not disturb the others.  f = 0 and the band is eps = sqrt(dt).
    """
    if not hi > lo:
        raise ValueError("local-time study needs lo < hi")
    too_fine = [int(N) for N in mesh_list if int(N) > MAX_WALK_MESH]
    if too_fine:
        raise ValueError(f"mesh {too_fine[0]} exceeds the cap {MAX_WALK_MESH}")
    start = 0.5 * (lo + hi) if start is None else float(start)
    if not lo <= start <= hi:
        raise ValueError(f"start {start} lies outside [{lo}, {hi}]")
    rows = []
    for N in mesh_list:
        N = int(N)
        grid = make_uniform_grid(T, N)
        b = constant_barriers(grid, lo, hi)
        zero = DiscretePath(grid, np.zeros(N + 1))
        rng = np.random.default_rng([int(seed), N])
        _, y, xi = reflected_walks(n_paths, N, lo, hi, start, T, rng)
        errs = [
            relative_rmse(k_from_local_times(DiscretePath(grid, y[p]), b, zero, default_eps(grid)).values, xi[p])
            for p in range(n_paths)
        ]
        rows.append((N, float(np.mean(errs)) if errs else 0.0))
    return rows
