"""Doubly reflected BSDE with resistance, solved by Picard iteration on a path tree.

The equation, in discrete form on every path, is

    Y_k = xi + sum_{i>=k} f(t_i, Y_i, Z_i, K_i) dt - sum_{i>=k} Z_i dW_{i+1} + K_N - K_k,
    K = K^l - K^u,   L <= Y <= U,

with K^l (K^u) increasing only when Y sits on L (U).  The increment
K_{k+1} - K_k is the push applied at time t_k.

One Picard step (``phi_iterate``) takes the previous quadruple, builds the
unreflected remainder on each path, reflects it backward in time between the
barriers with the Skorohod map, projects the resulting raw regulators onto the
filtration, and recovers (Y, Z) from the projected backward recursion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import BarrierPair, DiscretePath, TimeGrid, reverse_in_time
from .skorohod import oracle_batch, xi_max_batch
from .tree import PathTree, dual_optional_projection, martingale_representation, optional_projection


class ScenarioError(ValueError):
    pass


class UnsupportedDriverError(ValueError):
    pass


# -- drivers and terminal values --------------------------------------------

_DRIVER_ARITY = {"zero": 0, "constant": 1, "affine": 4, "bounded_nonlinear": 1}


@dataclass(frozen=True)
class DriverSpec:
    """Catalog driver f(t, y, z, k).

    zero; constant(c); affine(a, b_y, b_z, b_k) = a + b_y y + b_z z + b_k k;
    bounded_nonlinear(s) = s tanh(y + z + k).

    L1 and L2 default to the exact Lipschitz constants of the entry; declared
    values below them are rejected.
    """

    kind: str
    params: tuple = ()
    L1: float | None = None
    L2: float | None = None

    def __post_init__(self):
        if self.kind not in _DRIVER_ARITY:
            raise ValueError(f"unknown driver kind {self.kind!r}; expected one of {sorted(_DRIVER_ARITY)}")
        params = tuple(float(p) for p in self.params)
        if len(params) != _DRIVER_ARITY[self.kind]:
            raise ValueError(f"{self.kind} driver takes {_DRIVER_ARITY[self.kind]} params, got {len(params)}")
        object.__setattr__(self, "params", params)
        l1, l2 = self.exact_lipschitz()
        for name, declared, exact in (("L1", self.L1, l1), ("L2", self.L2, l2)):
            if declared is None:
                object.__setattr__(self, name, exact)
            elif declared < 0 or declared < exact - 1e-15:
                raise ValueError(f"declared {name}={declared} is below the driver's Lipschitz constant {exact}")

    def exact_lipschitz(self) -> tuple[float, float]:
        if self.kind in ("zero", "constant"):
            return 0.0, 0.0
        if self.kind == "affine":
            _, by, bz, bk = self.params
            return max(abs(by), abs(bz)), abs(bk)
        s = abs(self.params[0])
        return s, s

    def __call__(self, t, y, z, k):
        y = np.asarray(y, dtype=float)
        if self.kind == "zero":
            return np.zeros(np.broadcast_shapes(np.shape(t), y.shape, np.shape(z), np.shape(k)))
        if self.kind == "constant":
            return np.full(np.broadcast_shapes(np.shape(t), y.shape, np.shape(z), np.shape(k)), self.params[0])
        if self.kind == "affine":
            a, by, bz, bk = self.params
            return a + by * y + bz * np.asarray(z) + bk * np.asarray(k) + 0.0 * np.asarray(t)
        return self.params[0] * np.tanh(y + z + k) + 0.0 * np.asarray(t)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": list(self.params), "L1": self.L1, "L2": self.L2}

    @classmethod
    def from_dict(cls, d: dict) -> "DriverSpec":
        return cls(d["kind"], tuple(d.get("params", ())), d.get("L1"), d.get("L2"))


_TERMINAL_ARITY = {"constant": (1,), "identity": (0,), "affine": (2,), "clamp": (2,), "sin": (2,), "running_max": (0, 2)}


@dataclass(frozen=True)
class TerminalSpec:
    """Terminal value as a functional of the Brownian path.

    constant(c); identity = W_T; affine(a, b) = a + b W_T; clamp(lo, hi) = W_T
    clipped to [lo, hi]; sin(amp, freq) = amp sin(freq W_T);
    running_max([lo, hi]) = max_k W_k, optionally clipped.
    """

    kind: str
    params: tuple = ()

    def __post_init__(self):
        if self.kind not in _TERMINAL_ARITY:
            raise ValueError(f"unknown terminal kind {self.kind!r}; expected one of {sorted(_TERMINAL_ARITY)}")
        params = tuple(float(p) for p in self.params)
        if len(params) not in _TERMINAL_ARITY[self.kind]:
            raise ValueError(f"{self.kind} terminal takes {_TERMINAL_ARITY[self.kind]} params, got {len(params)}")
        if self.kind == "clamp" and params[0] > params[1]:
            raise ValueError("clamp terminal needs lo <= hi")
        object.__setattr__(self, "params", params)

    def evaluate(self, tree: PathTree) -> np.ndarray:
        w = tree.W[-1]
        p = self.params
        if self.kind == "constant":
            return np.full(tree.n_paths, p[0])
        if self.kind == "identity":
            return w.copy()
        if self.kind == "affine":
            return p[0] + p[1] * w
        if self.kind == "clamp":
            return np.clip(w, p[0], p[1])
        if self.kind == "sin":
            return p[0] * np.sin(p[1] * w)
        m = tree.W.max(axis=0)
        return np.clip(m, p[0], p[1]) if p else m

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": list(self.params)}

    @classmethod
    def from_dict(cls, d: dict) -> "TerminalSpec":
        return cls(d["kind"], tuple(d.get("params", ())))


# -- scenario and solution containers ---------------------------------------


@dataclass(eq=False)
class Scenario:
    tree: PathTree
    barriers: BarrierPair
    driver: DriverSpec
    xi: np.ndarray
    terminal: TerminalSpec | None = None

    @property
    def grid(self) -> TimeGrid:
        return self.tree.grid

    @property
    def lower(self) -> np.ndarray:
        return self.barriers.lower.values

    @property
    def upper(self) -> np.ndarray:
        return self.barriers.upper.values


def validate_scenario(tree: PathTree, barriers: BarrierPair, driver: DriverSpec, terminal) -> Scenario:
    """Check the pieces fit together; ``terminal`` is a TerminalSpec or an array of per-path values."""
    if barriers.grid != tree.grid:
        raise ScenarioError(f"barriers live on {barriers.grid}, tree on {tree.grid}")
    if isinstance(terminal, TerminalSpec):
        spec, xi = terminal, terminal.evaluate(tree)
    else:
        spec, xi = None, np.array(terminal, dtype=float)
    if xi.shape != (tree.n_paths,):
        raise ScenarioError(f"terminal value needs one entry per path ({tree.n_paths}), got shape {xi.shape}")
    if not np.all(np.isfinite(xi)):
        raise ScenarioError("terminal value must be finite")
    lo, hi = barriers.lower.values[-1], barriers.upper.values[-1]
    bad = (xi < lo) | (xi > hi)
    if np.any(bad):
        w = int(np.argmax(bad))
        raise ScenarioError(f"terminal value {xi[w]:.6g} on path {w} lies outside [L_T, U_T] = [{lo:.6g}, {hi:.6g}]")
    xi.setflags(write=False)
    return Scenario(tree, barriers, driver, xi, spec)


@dataclass(eq=False)
class SolutionQuad:
    """(Y, Z, K^l, K^u), each of shape (N+1, 2**N); row N of Z is unused and kept at zero."""

    grid: TimeGrid
    Y: np.ndarray
    Z: np.ndarray
    Kl: np.ndarray
    Ku: np.ndarray

    @property
    def K(self) -> np.ndarray:
        return self.Kl - self.Ku

    @classmethod
    def zeros(cls, tree: PathTree) -> "SolutionQuad":
        return cls(tree.grid, tree.zeros(), tree.zeros(), tree.zeros(), tree.zeros())

    def copy(self) -> "SolutionQuad":
        return SolutionQuad(self.grid, self.Y.copy(), self.Z.copy(), self.Kl.copy(), self.Ku.copy())


@dataclass(frozen=True)
class PicardConfig:
    alpha: float = 0.0
    beta: float = 1.0
    gamma1: float | None = None
    gamma2: float | None = None
    tol: float = 1e-9
    max_iter: int = 50
    c_b: float = 4.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be nonnegative")
        for name in ("gamma1", "gamma2"):
            g = getattr(self, name)
            if g is not None and g <= 0:
                raise ValueError(f"{name} must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError("max_iter must be a positive integer")
        if self.c_b < 0:
            raise ValueError("c_b must be nonnegative")


@dataclass
class PicardReport:
    distances: list = field(default_factory=list)
    converged: bool = False
    constants: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    adaptedness_gap: float = math.nan
    raw_vs_projected_gap: float = math.nan
    decomposition_gap: float = 0.0

    @property
    def iterations(self) -> int:
        return len(self.distances)

    @property
    def ratios(self) -> list:
        d = self.distances
        return [d[i + 1] / d[i] if d[i] > 0 else math.nan for i in range(len(d) - 1)]

    @property
    def contracting(self) -> bool:
        """Empirical verdict: converged, and no distance grew after the first step."""
        return self.converged and all(r <= 1.0 for r in self.ratios[1:] if not math.isnan(r))

    @property
    def geometric_r2(self) -> float:
        """R^2 of a straight-line fit of log d_n against n."""
        d = np.array(self.distances)
        n = np.arange(len(d))[d > 0]
        if n.size < 3:
            return math.nan
        logd = np.log(d[d > 0])
        fit = np.polyval(np.polyfit(n, logd, 1), n)
        ss_tot = np.sum((logd - logd.mean()) ** 2)
        return float(1.0 - np.sum((logd - fit) ** 2) / ss_tot) if ss_tot > 0 else 1.0


# -- Picard map --------------------------------------------------------------


def _driver_values(scn: Scenario, quad: SolutionQuad, project_k: bool = True) -> np.ndarray:
    K = optional_projection(scn.tree, quad.K) if project_k else quad.K
    return scn.driver(scn.grid.times[:, None], quad.Y, quad.Z, K)


def _backward_sums(scn: Scenario, quad: SolutionQuad, F: np.ndarray) -> np.ndarray:
    """m_k = xi + sum_{i>=k} F_i dt - sum_{i>=k} Z_i dW_{i+1}."""
    N = scn.tree.N
    steps = F[:N] * scn.tree.dt - quad.Z[:N] * scn.tree.dW
    m = np.empty(scn.tree.shape)
    m[N] = scn.xi
    m[:N] = scn.xi + np.cumsum(steps[::-1], axis=0)[::-1]
    return m


def remainder_path(scn: Scenario, quad: SolutionQuad, omega: int) -> DiscretePath:
    """Unreflected remainder on path omega, read backward: x_j = m_{N-j}, so x_0 = xi."""
    m = _backward_sums(scn, quad, _driver_values(scn, quad))
    return reverse_in_time(DiscretePath(scn.grid, m[:, omega]))


@dataclass(eq=False)
class _RawStep:
    Kl: np.ndarray
    Ku: np.ndarray
    Y_hat: np.ndarray
    decomposition_gap: float


def _project_pushes(tree: PathTree, dK: np.ndarray) -> np.ndarray:
    """Dual optional projection of a regulator indexed by contact time.

    Row k+1 of ``dK`` is the push applied at t_k, so it is projected on F_k;
    the projected regulator then has predictable increments.
    """
    push = dual_optional_projection(tree, np.cumsum(np.vstack([dK[1:], np.zeros(tree.n_paths)]), axis=0))
    return np.vstack([np.zeros(tree.n_paths), push[:-1]])


def _phi(scn: Scenario, quad: SolutionQuad) -> tuple[SolutionQuad, _RawStep]:
    tree = scn.tree
    N, dt = tree.N, tree.dt
    F = _driver_values(scn, quad)
    m = _backward_sums(scn, quad, F)

    # reflect every path backward in time: reversed index j <-> time index N - j
    x = m[::-1].T
    lo_r, hi_r = scn.lower[::-1], scn.upper[::-1]
    xi_rev = xi_max_batch(x, lo_r, hi_r)
    y_rev, dl_rev, du_rev = oracle_batch(x, lo_r, hi_r)

    # increment k (time t_{k-1} -> t_k) is the push at reversed index N-k+1
    dKl = np.zeros(tree.shape)
    dKu = np.zeros(tree.shape)
    dKl[1:] = dl_rev[:, N:0:-1].T
    dKu[1:] = du_rev[:, N:0:-1].T
    Kl_raw = np.cumsum(dKl, axis=0)
    Ku_raw = np.cumsum(dKu, axis=0)
    K_from_xi = xi_rev[:, ::-1].T - xi_rev[:, -1]
    decomposition_gap = float(np.max(np.abs(K_from_xi - (Kl_raw - Ku_raw))))

    Klo = _project_pushes(tree, dKl)
    Kuo = _project_pushes(tree, dKu)
    Ko = Klo - Kuo

    Y = np.empty(tree.shape)
    Y[N] = scn.xi
    for k in range(N - 1, -1, -1):
        Y[k] = tree.cond(Y[k + 1] + Ko[k + 1] - Ko[k], k) + F[k] * dt
        # rounding guard only: the projection of a path in [L, U] stays in [L, U]
        Y[k] = np.clip(Y[k], scn.lower[k], scn.upper[k])

    drift = np.zeros(tree.shape)
    drift[1:] = np.cumsum(F[:N] * dt, axis=0)
    Z = martingale_representation(tree, Y + drift + Ko)

    new = SolutionQuad(scn.grid, Y, Z, Klo, Kuo)
    return new, _RawStep(Kl_raw, Ku_raw, y_rev[:, ::-1].T, decomposition_gap)


def phi_iterate(scn: Scenario, quad: SolutionQuad, cfg: PicardConfig | None = None) -> SolutionQuad:
    return _phi(scn, quad)[0]


def picard_distance(q1: SolutionQuad, q2: SolutionQuad, cfg: PicardConfig, squared: bool = False) -> float:
    """Weighted distance: sum_k e^{alpha t_k} E|dY_k|^2 dt + same for Z + beta max_k E|dK_k|^2.

    The time sums run over k = 0..N-1; the K term takes the max over all k.
    """
    g = q1.grid
    if q2.grid != g:
        raise ValueError("quads live on different grids")
    N, dt = g.N, g.dt
    w = np.exp(cfg.alpha * g.times[:N])
    dy = np.mean((q1.Y - q2.Y) ** 2, axis=1)[:N]
    dz = np.mean((q1.Z - q2.Z) ** 2, axis=1)[:N]
    dk = np.mean((q1.K - q2.K) ** 2, axis=1)
    total = float(np.sum(w * dy) * dt + np.sum(w * dz) * dt + cfg.beta * np.max(dk))
    return total if squared else math.sqrt(total)


def solve_picard(scn: Scenario, cfg: PicardConfig | None = None, initial: SolutionQuad | None = None):
    """Iterate phi from ``initial`` (zero quad by default) until the distance drops below tol."""
    cfg = cfg or PicardConfig()
    quad = initial.copy() if initial is not None else SolutionQuad.zeros(scn.tree)
    report = PicardReport(constants=contraction_constants(scn.driver.L1, scn.driver.L2, scn.grid.T, cfg))
    raw = None
    for _ in range(cfg.max_iter):
        new, raw = _phi(scn, quad)
        d = picard_distance(new, quad, cfg)
        report.distances.append(d)
        report.decomposition_gap = max(report.decomposition_gap, raw.decomposition_gap)
        quad = new
        if d < cfg.tol:
            report.converged = True
            break
        if not np.isfinite(d):
            break

    report.residuals = residual_check(scn, quad)
    if raw is not None:
        K_raw = raw.Kl - raw.Ku
        report.adaptedness_gap = float(np.max(np.abs(K_raw - optional_projection(scn.tree, K_raw))))
        report.raw_vs_projected_gap = float(np.max(np.abs(K_raw - quad.K)))
    return quad, report


# -- contraction constants ---------------------------------------------------


def contraction_constants(L1: float, L2: float, T: float, cfg: PicardConfig | None = None) -> dict:
    """Coefficients of the one-step contraction bound and the smallness conditions.

    With alpha = 5, gamma1 = 2/L1, gamma2 = 2/L2 (unless set in cfg), the bound reads

        d_new^2 <= c_yz (||dY||^2 + ||dZ||^2) + c_k beta ||dK||^2,
        c_yz = 2 L1/gamma1 + 45 beta (T L1^2 + C_b),
        c_k  = 2 L2 (e^{alpha T} - 1) / (alpha beta gamma2) + 45 T L2^2.

    ``printed_*`` flags test the smallness bounds in their published form;
    ``recomputed_*`` flags test c_yz <= 1/2 and c_k <= 1/2 directly.
    """
    cfg = cfg or PicardConfig()
    alpha = 5.0
    beta, cb = cfg.beta, cfg.c_b
    g1 = cfg.gamma1 if cfg.gamma1 is not None else (2.0 / L1 if L1 > 0 else math.inf)
    g2 = cfg.gamma2 if cfg.gamma2 is not None else (2.0 / L2 if L2 > 0 else math.inf)

    step1_yz = 2.0 * L1 / g1
    if L2 == 0:
        step1_k = 0.0
    elif beta == 0:
        step1_k = math.inf
    else:
        step1_k = 2.0 * L2 * math.expm1(alpha * T) / (alpha * beta * g2)
    c_yz = step1_yz + 45.0 * beta * (T * L1**2 + cb)
    c_k = step1_k + 45.0 * T * L2**2

    def root(num, den):
        if den <= 0:
            return math.inf if num > 0 else math.nan
        return math.sqrt(num / den) if num >= 0 else math.nan

    printed_l1_bound = root(0.5 - cb, 45.0 * T * beta)
    printed_l2_bound = root(0.5 * 5.0 * beta, math.exp(5.0 * T) + 225.0 * beta - 1.0)
    return {
        "alpha": alpha,
        "beta": beta,
        "gamma1": g1,
        "gamma2": g2,
        "c_b": cb,
        "coef_yz": c_yz,
        "coef_k": c_k,
        "theoretical_coefficient": max(c_yz, c_k),
        "printed_l1_bound": printed_l1_bound,
        "printed_l2_bound": printed_l2_bound,
        "printed_l1_ok": bool(L1 < printed_l1_bound),
        "printed_l2_ok": bool(L2 < printed_l2_bound),
        "recomputed_yz_ok": bool(c_yz <= 0.5),
        "recomputed_k_ok": bool(c_k <= 0.5),
    }


# -- independent oracle and residuals ---------------------------------------


def backward_induction_oracle(scn: Scenario, frozen_k: float | None = None) -> SolutionQuad:
    """Classical explicit scheme: clamp E[Y_{k+1} | F_k] + f(t_k, E[Y_{k+1} | F_k], Z_k) dt into [L_k, U_k].

    Only defined for drivers without k-dependence; ``frozen_k`` evaluates a
    resistance driver at a fixed k instead (used for warm starts).
    """
    if scn.driver.L2 != 0 and frozen_k is None:
        raise UnsupportedDriverError("backward induction needs a driver independent of k (L2 = 0)")
    kval = 0.0 if frozen_k is None else float(frozen_k)
    tree = scn.tree
    N, dt = tree.N, tree.dt
    t = scn.grid.times
    Y, Z, dKl, dKu = tree.zeros(), tree.zeros(), tree.zeros(), tree.zeros()
    Y[N] = scn.xi
    for k in range(N - 1, -1, -1):
        ey = tree.cond(Y[k + 1], k)
        Z[k] = tree.cond(Y[k + 1] * tree.dW[k], k) / dt
        ybar = ey + scn.driver(t[k], ey, Z[k], kval) * dt
        dKl[k + 1] = np.maximum(scn.lower[k] - ybar, 0.0)
        dKu[k + 1] = np.maximum(ybar - scn.upper[k], 0.0)
        Y[k] = np.clip(ybar, scn.lower[k], scn.upper[k])
    return SolutionQuad(scn.grid, Y, Z, np.cumsum(dKl, axis=0), np.cumsum(dKu, axis=0))


def warm_start(scn: Scenario) -> SolutionQuad:
    """Oracle solution with the driver's k argument frozen at zero."""
    return backward_induction_oracle(scn, frozen_k=0.0)


def residual_check(scn: Scenario, quad: SolutionQuad) -> dict:
    """Residuals of the three solution conditions.

    identity: max over nodes of |Y_k - (xi + sum f dt - sum Z dW + K_N - K_k)|
    containment: largest excursion of Y outside [L, U]
    flat_off: max over paths of sum_k (Y_k - L_k) dK^l_{k+1} and sum_k (U_k - Y_k) dK^u_{k+1}
    """
    N = scn.tree.N
    F = _driver_values(scn, quad, project_k=False)
    m = _backward_sums(scn, quad, F)
    K = quad.K
    identity = float(np.max(np.abs(m + (K[N] - K) - quad.Y)))
    lo, hi = scn.lower[:, None], scn.upper[:, None]
    containment = float(max(0.0, np.max(lo - quad.Y), np.max(quad.Y - hi)))
    dKl = np.diff(quad.Kl, axis=0)
    dKu = np.diff(quad.Ku, axis=0)
    flat_l = float(np.max(np.abs(np.sum((quad.Y[:N] - lo[:N]) * dKl, axis=0))))
    flat_u = float(np.max(np.abs(np.sum((hi[:N] - quad.Y[:N]) * dKu, axis=0))))
    variation = float(np.max(quad.Kl[N] + quad.Ku[N]))
    monotone = float(max(0.0, -min(dKl.min(initial=0.0), dKu.min(initial=0.0))))
    return {
        "identity": identity,
        "containment": containment,
        "flat_off": max(flat_l, flat_u),
        "flat_off_l": flat_l,
        "flat_off_u": flat_u,
        "regulator_variation": variation,
        "regulator_decrease": monotone,
        "terminal": float(np.max(np.abs(quad.Y[N] - scn.xi))),
    }
