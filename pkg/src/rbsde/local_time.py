"""Tanaka-type local time estimates and the reconstruction of K from them.

The boundary indicator 1{Y = L} becomes 1{|Y - L| <= eps} on a grid; the
default band is eps = sqrt(dt).  Signs follow the formulas as printed: for a
path reflected forward in time (y = x + eta), the one-sided pieces come out as
-eta_l and -eta_u and the combined K approximates -eta.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import BarrierPair, DiscretePath, _check_same_grid

MONOTONE_TOL = 1e-9
CONTAINMENT_TOL = 1e-9


class OutsideBarriersError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LocalTimeEstimate:
    path: DiscretePath
    eps: float
    source: str = "tanaka"

    @property
    def max_decrease(self) -> float:
        """Largest one-step drop; a genuine local time never decreases."""
        d = np.diff(self.path.values)
        return float(max(0.0, -d.min())) if d.size else 0.0

    @property
    def is_monotone(self) -> bool:
        return self.max_decrease <= MONOTONE_TOL


def _tanaka(S: np.ndarray, eps: float) -> np.ndarray:
    neg = np.maximum(-S, 0.0)
    steps = np.where(S[:-1] <= eps, np.diff(S), 0.0)
    return neg - neg[0] + np.concatenate([[0.0], np.cumsum(steps)])


def tanaka_local_time(S: DiscretePath, eps: float) -> LocalTimeEstimate:
    """L_k = S_k^- - S_0^- + sum_{j<k} 1{S_j <= eps} (S_{j+1} - S_j)."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    return LocalTimeEstimate(DiscretePath(S.grid, _tanaka(S.values, eps)), float(eps))


def default_eps(grid) -> float:
    return float(np.sqrt(grid.dt))


def kl_ku_from_local_times(Y: DiscretePath, b: BarrierPair, fvals: DiscretePath, eps: float | None = None):
    """One-sided reconstructions (K^l, K^u) from the two boundary local times.

    K^l = -sum 1{|Y-L|<=eps} f dt - sum 1{|Y-L|<=eps} dA^L - L^{Y-L}
    K^u =  sum 1{|U-Y|<=eps} f dt + sum 1{|U-Y|<=eps} dA^U - L^{U-Y}
    with indicators taken at the left end of each step.
    """
    _check_same_grid(Y, b.lower, fvals)
    g = Y.grid
    eps = default_eps(g) if eps is None else float(eps)
    y, lo, hi = Y.values, b.lower.values, b.upper.values
    below = np.max(lo - y)
    above = np.max(y - hi)
    if max(below, above) > CONTAINMENT_TOL:
        raise OutsideBarriersError(f"Y leaves the barriers by {max(below, above):.3g}")

    near_l = np.abs(y - lo)[:-1] <= eps
    near_u = np.abs(hi - y)[:-1] <= eps
    f = fvals.values[:-1] * g.dt
    dA_l, dA_u = b.increments()

    def accumulate(steps):
        return np.concatenate([[0.0], np.cumsum(steps)])

    lt_l = _tanaka(y - lo, eps)
    lt_u = _tanaka(hi - y, eps)
    kl = -accumulate(near_l * f) - accumulate(near_l * dA_l) - lt_l
    ku = accumulate(near_u * f) + accumulate(near_u * dA_u) - lt_u
    return DiscretePath(g, kl), DiscretePath(g, ku)


def k_from_local_times(Y: DiscretePath, b: BarrierPair, fvals: DiscretePath, eps: float | None = None) -> DiscretePath:
    """K = -sum (1{Y~L} + 1{Y~U}) f dt - sum 1{Y~U} dA^U - sum 1{Y~L} dA^L + L^{U-Y} - L^{Y-L}."""
    _check_same_grid(Y, b.lower, fvals)
    g = Y.grid
    eps = default_eps(g) if eps is None else float(eps)
    y, lo, hi = Y.values, b.lower.values, b.upper.values
    if max(np.max(lo - y), np.max(y - hi)) > CONTAINMENT_TOL:
        raise OutsideBarriersError("Y leaves the barriers")
    near_l = (np.abs(y - lo)[:-1] <= eps).astype(float)
    near_u = (np.abs(hi - y)[:-1] <= eps).astype(float)
    dA_l, dA_u = b.increments()
    steps = -(near_l + near_u) * fvals.values[:-1] * g.dt - near_u * dA_u - near_l * dA_l
    k = np.concatenate([[0.0], np.cumsum(steps)]) + _tanaka(hi - y, eps) - _tanaka(y - lo, eps)
    return DiscretePath(g, k)


def relative_rmse(estimate: np.ndarray, reference: np.ndarray) -> float:
    """RMS error over the grid, scaled by the sup norm of the reference.

    A reference that is identically zero gives 0 when the estimate is also zero
    and 1 otherwise.
    """
    err = float(np.sqrt(np.mean((np.asarray(estimate) - np.asarray(reference)) ** 2)))
    scale = float(np.max(np.abs(reference)))
    if scale == 0.0:
        return 0.0 if err == 0.0 else 1.0
    return err / scale
