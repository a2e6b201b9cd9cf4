"""Two-sided Skorohod map on a time-dependent interval [alpha, beta].

Conventions: for an input path x the reflected path is y = x + eta with
eta = eta_l - eta_u, and the map is written y = Gamma(x) = x - Xi(x), so
Xi = -eta.  Suprema and infima are taken index-wise over the grid.

The private ``*_batch`` helpers work on arrays of shape (..., N+1) so the
solver can reflect every path of a tree at once; the public functions wrap
them for single ``DiscretePath`` inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import BarrierPair, DiscretePath, _check_same_grid, sup_norm_distance

NEVER = math.inf


class StartOutsideError(ValueError):
    """The input path starts outside [alpha_0, beta_0]."""


@dataclass(frozen=True)
class HittingTimes:
    t_alpha: float  # grid index, or NEVER
    t_beta: float

    def __post_init__(self):
        if self.t_alpha != NEVER and self.t_alpha == self.t_beta:
            raise ValueError("both barriers hit at the same index; barrier gap must be positive")


@dataclass(frozen=True, eq=False)
class ESMOutput:
    reflected: DiscretePath
    xi: DiscretePath
    regulator: DiscretePath
    eta_l: DiscretePath
    eta_u: DiscretePath


# -- batch kernels ----------------------------------------------------------


def _running_h(a, b):
    """H_t = max_{s<=t} min(a_s, min_{s<=r<=t} b_r), via H_t = min(max(H_{t-1}, a_t), b_t)."""
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    a = np.broadcast_to(a, out.shape)
    b = np.broadcast_to(b, out.shape)
    h = np.minimum(a[..., 0], b[..., 0])
    out[..., 0] = h
    for t in range(1, out.shape[-1]):
        h = np.minimum(np.maximum(h, a[..., t]), b[..., t])
        out[..., t] = h
    return out


def _running_j(c, d):
    """J_t = min_{s<=t} max(c_s, max_{s<=r<=t} d_r), via J_t = max(min(J_{t-1}, c_t), d_t)."""
    return -_running_h(-c, -d)


def h_batch(x, lo, hi):
    return _running_h(x - hi, x - lo)


def j_batch(x, lo, hi):
    return _running_j(x - lo, x - hi)


def xi_max_batch(x, lo, hi):
    """Max-formula regulator with the positive part on the initial term only."""
    x = np.asarray(x, dtype=float)
    first = np.minimum(np.maximum(x[..., :1] - hi[0], 0.0), np.minimum.accumulate(x - lo, axis=-1))
    return np.maximum(first, h_batch(x, lo, hi))


def hitting_batch(x, lo, hi):
    """First indices k >= 1 with x_k <= lo_k (alpha) and x_k >= hi_k (beta); N+1 when never."""
    n1 = x.shape[-1]
    idx = np.arange(n1)

    def first(mask):
        mask = mask & (idx >= 1)
        return np.where(mask.any(axis=-1), np.argmax(mask, axis=-1), n1)

    return first(lo - x >= 0), first(x - hi >= 0)


def check_start_batch(x, lo, hi):
    x0 = x[..., 0]
    bad = (x0 < lo[0]) | (x0 > hi[0])
    if np.any(bad):
        raise StartOutsideError(
            f"path starts outside [{lo[0]:.6g}, {hi[0]:.6g}] (x_0 = {np.asarray(x0)[bad].ravel()[0]:.6g})"
        )


def xi_slaby_batch(x, lo, hi):
    x = np.asarray(x, dtype=float)
    check_start_batch(x, lo, hi)
    ta, tb = hitting_batch(x, lo, hi)
    idx = np.arange(x.shape[-1])
    use_h = (tb < ta)[..., None] & (idx >= tb[..., None])
    use_j = (ta < tb)[..., None] & (idx >= ta[..., None])
    return np.where(use_h, h_batch(x, lo, hi), 0.0) + np.where(use_j, j_batch(x, lo, hi), 0.0)


def oracle_batch(x, lo, hi):
    """Step projection: returns (y, d_eta_l, d_eta_u), increments indexed like x.

    y_k is produced by np.clip, so a charged index sits exactly on its barrier.
    """
    x = np.asarray(x, dtype=float)
    y = np.empty_like(x)
    dl = np.zeros_like(x)
    du = np.zeros_like(x)
    pre = x[..., 0]
    for k in range(x.shape[-1]):
        if k > 0:
            pre = y[..., k - 1] + (x[..., k] - x[..., k - 1])
        du[..., k] = np.maximum(pre - hi[k], 0.0)
        dl[..., k] = np.maximum(lo[k] - pre, 0.0)
        y[..., k] = np.clip(pre, lo[k], hi[k])
    return y, dl, du


# -- public API on single paths --------------------------------------------


def _arrays(x: DiscretePath, b: BarrierPair):
    _check_same_grid(x, b.lower)
    return x.values, b.lower.values, b.upper.values


def hitting_times(x: DiscretePath, b: BarrierPair) -> HittingTimes:
    xv, lo, hi = _arrays(x, b)
    if not lo[0] < xv[0] < hi[0]:
        raise StartOutsideError(f"x_0 = {xv[0]:.6g} is not strictly inside ({lo[0]:.6g}, {hi[0]:.6g})")
    ta, tb = hitting_batch(xv, lo, hi)
    n1 = len(xv)
    return HittingTimes(NEVER if ta == n1 else int(ta), NEVER if tb == n1 else int(tb))


def h_functional(x: DiscretePath, b: BarrierPair, t: int) -> float:
    xv, lo, hi = _arrays(x, b)
    return float(h_batch(xv[: t + 1], lo[: t + 1], hi[: t + 1])[-1])


def j_functional(x: DiscretePath, b: BarrierPair, t: int) -> float:
    xv, lo, hi = _arrays(x, b)
    return float(j_batch(xv[: t + 1], lo[: t + 1], hi[: t + 1])[-1])


def xi_maxformula(x: DiscretePath, b: BarrierPair) -> DiscretePath:
    xv, lo, hi = _arrays(x, b)
    return DiscretePath(x.grid, xi_max_batch(xv, lo, hi))


def xi_slaby(x: DiscretePath, b: BarrierPair) -> DiscretePath:
    """Branch formula: H after the upper barrier is hit first, J after the lower one.

    Requires alpha_0 <= x_0 <= beta_0.
    """
    xv, lo, hi = _arrays(x, b)
    return DiscretePath(x.grid, xi_slaby_batch(xv, lo, hi))


def _output(x, y, xi, dl, du):
    g = x.grid
    eta_l = np.cumsum(dl)
    eta_u = np.cumsum(du)
    return ESMOutput(
        reflected=DiscretePath(g, y),
        xi=DiscretePath(g, xi),
        regulator=DiscretePath(g, eta_l - eta_u),
        eta_l=DiscretePath(g, eta_l),
        eta_u=DiscretePath(g, eta_u),
    )


def step_projection_oracle(x: DiscretePath, b: BarrierPair) -> ESMOutput:
    xv, lo, hi = _arrays(x, b)
    y, dl, du = oracle_batch(xv, lo, hi)
    return _output(x, y, xv - y, dl, du)


def esm_gamma(x: DiscretePath, b: BarrierPair) -> ESMOutput:
    """Reflected path from the max formula, one-sided regulators from the step projection."""
    xv, lo, hi = _arrays(x, b)
    xi = xi_max_batch(xv, lo, hi)
    _, dl, du = oracle_batch(xv, lo, hi)
    return _output(x, xv - xi, xi, dl, du)


def check_skorohod_conditions(out: ESMOutput, b: BarrierPair) -> tuple[float, float]:
    """Flat-off residuals (sum (beta - y) d eta_u, sum (y - alpha) d eta_l).

    eta(0-) = 0, so the first increment is eta_0 itself.
    """
    _check_same_grid(out.reflected, b.lower)
    y = out.reflected.values
    d_u = np.diff(out.eta_u.values, prepend=0.0)
    d_l = np.diff(out.eta_l.values, prepend=0.0)
    res_u = float(np.sum((b.upper.values - y) * d_u))
    res_l = float(np.sum((y - b.lower.values) * d_l))
    return res_u, res_l


def jordan_split(regulator: DiscretePath) -> tuple[np.ndarray, np.ndarray]:
    """Positive/negative variation of a regulator path (cross-check for the one-sided split)."""
    d = np.diff(regulator.values, prepend=0.0)
    return np.cumsum(np.maximum(d, 0.0)), np.cumsum(np.maximum(-d, 0.0))


def lipschitz_gap(x: DiscretePath, x2: DiscretePath, b: BarrierPair, constant: float = 1.0) -> float:
    """constant * ||x - x2|| - ||Gamma(x) - Gamma(x2)|| in sup norm.

    Nonnegative for every pair exactly when Gamma is Lipschitz with that
    constant.  The regulator Xi is 1-Lipschitz, so constant = 2 always holds
    for Gamma = x - Xi; constant = 1 fails on some pairs, e.g. barriers [0, 1],
    x = (0.3, -0.7, 0.3), x2 = (0.3, -0.2, -0.2).
    """
    gx = esm_gamma(x, b).reflected
    gx2 = esm_gamma(x2, b).reflected
    return constant * sup_norm_distance(x, x2) - sup_norm_distance(gx, gx2)
