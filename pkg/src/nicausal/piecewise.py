"""Two-piece linear fits of a child on a parent, scored by weighted R^2."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .stats import DegenerateDataError, is_degenerate, pearson

__all__ = [
    "FitInfeasibleError",
    "QuantileGrid",
    "PiecewiseFit",
    "min_segment_size",
    "candidate_cuts",
    "segment_rss",
    "find_cut",
    "fit_direction",
    "eta",
]

# relative RSS tolerance under which two candidate cuts count as tied
TIE_RTOL = 1e-9


class FitInfeasibleError(ValueError):
    """No candidate cut leaves enough points on both sides."""


@dataclass(frozen=True)
class QuantileGrid:
    probabilities: tuple[float, ...]

    def __post_init__(self):
        probs = tuple(float(q) for q in self.probabilities)
        if not probs:
            raise ValueError("quantile grid is empty")
        if any(not 0.0 < q < 1.0 for q in probs):
            raise ValueError("grid probabilities must lie in (0, 1)")
        if any(b <= a for a, b in zip(probs, probs[1:])):
            raise ValueError("grid probabilities must be strictly increasing")
        object.__setattr__(self, "probabilities", probs)

    @classmethod
    def default(cls) -> "QuantileGrid":
        """0.30, 0.35, ..., 0.70; wider grids inflate eta on linear data."""
        return cls.uniform(9, 0.30, 0.70)

    @classmethod
    def uniform(cls, m: int, lo: float = 0.30, hi: float = 0.70) -> "QuantileGrid":
        """``m`` evenly spaced probabilities on ``[lo, hi]``."""
        if m < 1:
            raise ValueError("grid size must be positive")
        if m == 1:
            return cls((0.5 * (lo + hi),))
        return cls(tuple(round(q, 12) for q in np.linspace(lo, hi, m)))

    @property
    def m(self) -> int:
        return len(self.probabilities)


def min_segment_size(n: int) -> int:
    return max(10, math.ceil(0.05 * n))


def candidate_cuts(parent: np.ndarray, grid: QuantileGrid) -> np.ndarray:
    """Type-7 (linear interpolation) sample quantiles of ``parent``."""
    return np.quantile(parent, grid.probabilities)


@dataclass(frozen=True)
class PiecewiseFit:
    """Two-piece linear fit ``child ~ a + b*parent``, split at ``parent <= tau``."""

    tau: float
    a_l: float
    b_l: float
    a_h: float
    b_h: float
    n_l: int
    n_h: int
    r_l: float
    r_h: float
    rbar2: float
    residuals: np.ndarray = field(repr=False)
    degenerate: bool = False

    @property
    def n(self) -> int:
        return self.n_l + self.n_h

    def predict(self, parent) -> np.ndarray:
        parent = np.asarray(parent, dtype=float)
        low = parent <= self.tau
        return np.where(low, self.a_l + self.b_l * parent, self.a_h + self.b_h * parent)


def _standardize(v: np.ndarray) -> np.ndarray:
    s = v.std()
    return (v - v.mean()) / (s if s > 0 else 1.0)


def segment_rss(parent: np.ndarray, child: np.ndarray, cuts: np.ndarray, min_seg: int):
    """Total two-segment RSS at each cut, in units of the standardized child.

    Returns ``(rss, admissible)``; inadmissible cuts get ``rss = inf``. Works
    from prefix sums over the parent-sorted sample so every candidate costs
    O(1) after an O(n log n) sort.
    """
    x = _standardize(np.asarray(parent, dtype=float))
    y = _standardize(np.asarray(child, dtype=float))
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    n = xs.size
    zero = np.zeros(1)
    cx = np.concatenate([zero, np.cumsum(xs)])
    cy = np.concatenate([zero, np.cumsum(ys)])
    cxx = np.concatenate([zero, np.cumsum(xs * xs)])
    cyy = np.concatenate([zero, np.cumsum(ys * ys)])
    cxy = np.concatenate([zero, np.cumsum(xs * ys)])

    # split counts come from the raw parent so "<= cut" matches fit_direction exactly
    raw_sorted = np.asarray(parent, float)[order]
    k = np.searchsorted(raw_sorted, np.asarray(cuts, float), side="right")

    def seg(lo, hi):
        m = (hi - lo).astype(float)
        with np.errstate(invalid="ignore", divide="ignore"):
            sx = cx[hi] - cx[lo]
            sy = cy[hi] - cy[lo]
            sxx = cxx[hi] - cxx[lo] - sx * sx / m
            syy = cyy[hi] - cyy[lo] - sy * sy / m
            sxy = cxy[hi] - cxy[lo] - sx * sy / m
            flat = sxx <= 1e-12 * np.maximum(m, 1.0)
            rss = np.where(flat, syy, syy - sxy * sxy / np.where(flat, 1.0, sxx))
        return np.maximum(rss, 0.0)

    admissible = (k >= min_seg) & (n - k >= min_seg)
    rss = seg(np.zeros_like(k), k) + seg(k, np.full_like(k, n))
    rss = np.where(admissible, rss, np.inf)
    return rss, admissible


def find_cut(parent, child, grid: Optional[QuantileGrid] = None,
             min_seg: Optional[int] = None) -> float:
    """Grid cut minimizing the summed per-segment OLS RSS.

    Ties (within a relative tolerance) go to the smallest grid index.
    """
    return _find_cut_index(parent, child, grid, min_seg)[0]


def _find_cut_index(parent, child, grid, min_seg):
    parent = np.asarray(parent, dtype=float)
    child = np.asarray(child, dtype=float)
    if parent.shape != child.shape or parent.ndim != 1:
        raise ValueError("parent and child must be 1-d vectors of equal length")
    grid = grid or QuantileGrid.default()
    n = parent.size
    min_seg = min_segment_size(n) if min_seg is None else int(min_seg)
    if n < 2 * min_seg:
        raise FitInfeasibleError(f"n={n} is below twice the segment minimum {min_seg}")
    cuts = candidate_cuts(parent, grid)
    rss, ok = segment_rss(parent, child, cuts, min_seg)
    if not ok.any():
        raise FitInfeasibleError("no admissible cut point on the quantile grid")
    best = float(rss[ok].min())
    tol = TIE_RTOL * n
    idx = int(np.flatnonzero(rss <= best + tol)[0])
    return float(cuts[idx]), idx


def _ols_segment(x: np.ndarray, y: np.ndarray):
    """Intercept, slope, correlation, degenerate flag for one segment."""
    if is_degenerate(x) or is_degenerate(y):
        return float(y.mean()), 0.0, 0.0, True
    xm, ym = x.mean(), y.mean()
    xc, yc = x - xm, y - ym
    b = float(xc @ yc / (xc @ xc))
    try:
        r = pearson(x, y)
    except DegenerateDataError:
        return float(ym), 0.0, 0.0, True
    return float(ym - b * xm), b, r, False


def fit_direction(parent, child, grid: Optional[QuantileGrid] = None,
                  min_seg: Optional[int] = None) -> PiecewiseFit:
    """Fit the two-piece model ``child = f(parent) + noise`` at the best grid cut."""
    parent = np.asarray(parent, dtype=float)
    child = np.asarray(child, dtype=float)
    tau, _ = _find_cut_index(parent, child, grid, min_seg)
    low = parent <= tau
    a_l, b_l, r_l, d_l = _ols_segment(parent[low], child[low])
    a_h, b_h, r_h, d_h = _ols_segment(parent[~low], child[~low])
    n_l = int(low.sum())
    n_h = parent.size - n_l
    rbar2 = (n_l * r_l * r_l + n_h * r_h * r_h) / (n_l + n_h)
    resid = child - np.where(low, a_l + b_l * parent, a_h + b_h * parent)
    return PiecewiseFit(
        tau=tau, a_l=a_l, b_l=b_l, a_h=a_h, b_h=b_h, n_l=n_l, n_h=n_h,
        r_l=r_l, r_h=r_h, rbar2=float(min(1.0, max(0.0, rbar2))),
        residuals=resid, degenerate=d_l or d_h,
    )


def eta(rbar2_xy: float, rbar2_yx: float) -> float:
    """Larger ratio of the two directions' scores; ``inf`` if either is zero."""
    if rbar2_xy <= 0.0 or rbar2_yx <= 0.0:
        return math.inf
    return max(rbar2_xy / rbar2_yx, rbar2_yx / rbar2_xy)
