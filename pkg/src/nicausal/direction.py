"""Significance of the preferred direction between two variables.

Both p-value routes compare the observed eta against eta computed on a
modified sample in which the preferred two-piece fit is made invertible by
sliding one segment vertically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .piecewise import (
    FitInfeasibleError,
    PiecewiseFit,
    QuantileGrid,
    eta,
    fit_direction,
)
from .stats import RngStream

__all__ = [
    "NullData",
    "DirectionTest",
    "SegmentStats",
    "make_null",
    "bootstrap_pvalue",
    "normal_pvalue",
    "normal_null_etas",
    "direction_test",
]

RHO_CLAMP = 1.0 - 1e-6
MARGIN_FRACTION = 0.01
MAX_REDRAWS = 10


@dataclass(frozen=True)
class NullData:
    """Null sample in the original ``(x, y)`` orientation.

    ``shift`` was added to the child values of ``shifted_segment`` ('low' or
    'high' side of the preferred fit's cut); the child is ``y`` when
    ``x_to_y`` is true.
    """

    x0: np.ndarray = field(repr=False)
    y0: np.ndarray = field(repr=False)
    shift: float
    shifted_segment: str
    x_to_y: bool = True


@dataclass(frozen=True)
class DirectionTest:
    x_to_y: bool
    eta_hat: float
    p_value: float
    method: str
    replicates: int
    rbar2_xy: float
    rbar2_yx: float
    tie: bool = False
    fit_xy: Optional[PiecewiseFit] = field(default=None, repr=False)
    fit_yx: Optional[PiecewiseFit] = field(default=None, repr=False)
    null: Optional[NullData] = field(default=None, repr=False)
    flags: tuple[str, ...] = ()

    @property
    def preferred_fit(self) -> Optional[PiecewiseFit]:
        return self.fit_xy if self.x_to_y else self.fit_yx


def _iqr(v: np.ndarray) -> float:
    q1, q3 = np.quantile(v, [0.25, 0.75])
    return float(q3 - q1)


def _segment_range(fit: PiecewiseFit, parent: np.ndarray, low: bool) -> tuple[float, float]:
    a, b = (fit.a_l, fit.b_l) if low else (fit.a_h, fit.b_h)
    seg = parent[parent <= fit.tau] if low else parent[parent > fit.tau]
    ends = a + b * np.array([seg.min(), seg.max()])
    return float(ends.min()), float(ends.max())


def make_null(x, y, fit: PiecewiseFit, x_to_y: bool = True,
              margin: Optional[float] = None) -> NullData:
    """Slide the smaller segment of the preferred fit until the fitted pieces
    cover disjoint child ranges.

    The move (up or down) is the shorter one, plus ``margin`` (default 1% of
    the child's interquartile range). Already-disjoint pieces are left alone.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    parent, child = (x, y) if x_to_y else (y, x)
    if margin is None:
        margin = MARGIN_FRACTION * _iqr(child)
    low_mask = parent <= fit.tau
    lo_range = _segment_range(fit, parent, True)
    hi_range = _segment_range(fit, parent, False)
    # the segment with fewer points moves; on a tie the high one does
    move_low = fit.n_l < fit.n_h
    (s0, s1), (o0, o1) = (lo_range, hi_range) if move_low else (hi_range, lo_range)
    label = "low" if move_low else "high"

    if s0 > o1 or s1 < o0:
        shift = 0.0
    else:
        up = o1 - s0 + margin
        down = s1 - o0 + margin
        shift = up if up < down else -down

    new_child = child.copy()
    if shift:
        seg = low_mask if move_low else ~low_mask
        new_child[seg] += shift
    if x_to_y:
        return NullData(x.copy(), new_child, shift, label, True)
    return NullData(new_child, y.copy(), shift, label, False)


def _eta_both(x, y, grid, min_seg) -> float:
    fxy = fit_direction(x, y, grid, min_seg)
    fyx = fit_direction(y, x, grid, min_seg)
    return eta(fxy.rbar2, fyx.rbar2)


def bootstrap_null_etas(null: NullData, B: int, grid: Optional[QuantileGrid],
                        rng: RngStream, min_seg: Optional[int] = None) -> np.ndarray:
    """``B`` bootstrap draws of eta on the null sample.

    Replicate ``b`` uses stream ``rng.child(b)``; a replicate whose fit is
    infeasible is redrawn up to ``MAX_REDRAWS`` times and otherwise scored
    as ``inf``.
    """
    x0, y0 = null.x0, null.y0
    n = x0.size
    out = np.empty(B)
    for b in range(B):
        gen = rng.child(b).generator()
        val = math.inf
        for _ in range(MAX_REDRAWS + 1):
            idx = gen.integers(0, n, size=n)
            try:
                val = _eta_both(x0[idx], y0[idx], grid, min_seg)
                break
            except FitInfeasibleError:
                continue
        out[b] = val
    return out


def bootstrap_pvalue(null: NullData, eta_hat: float, B: int = 500,
                     grid: Optional[QuantileGrid] = None,
                     rng: Optional[RngStream] = None,
                     min_seg: Optional[int] = None) -> float:
    if B < 100:
        raise ValueError("bootstrap needs B >= 100")
    rng = rng or RngStream(0)
    etas = bootstrap_null_etas(null, B, grid, rng, min_seg)
    return (1.0 + float(np.count_nonzero(etas >= eta_hat))) / (B + 1.0)


@dataclass(frozen=True)
class SegmentStats:
    """Per-segment correlations and sizes of one direction's fit."""

    rho_l: float
    rho_h: float
    n_l: int
    n_h: int

    @classmethod
    def of(cls, fit: PiecewiseFit) -> "SegmentStats":
        return cls(fit.r_l, fit.r_h, fit.n_l, fit.n_h)


def normal_null_etas(xy: SegmentStats, yx: SegmentStats, K: int,
                     rng: RngStream) -> tuple[np.ndarray, bool]:
    """Draw ``K`` null etas from Fisher-z normal approximations of the four
    segment correlations. Returns ``(etas, clamped)``.
    """
    rhos = np.array([xy.rho_l, xy.rho_h, yx.rho_l, yx.rho_h], dtype=float)
    ns = np.array([xy.n_l, xy.n_h, yx.n_l, yx.n_h], dtype=float)
    if np.any(ns - 3 < 1):
        raise ValueError("every segment needs at least 4 points for the normal approximation")
    clamped = bool(np.any(np.abs(rhos) > RHO_CLAMP))
    rhos = np.clip(rhos, -RHO_CLAMP, RHO_CLAMP)
    gen = rng.generator()
    z = gen.standard_normal((K, 4)) / np.sqrt(ns - 3.0) + np.arctanh(rhos)
    r2 = np.tanh(z) ** 2
    s_xy = (ns[0] * r2[:, 0] + ns[1] * r2[:, 1]) / (ns[0] + ns[1])
    s_yx = (ns[2] * r2[:, 2] + ns[3] * r2[:, 3]) / (ns[2] + ns[3])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.maximum(s_xy / s_yx, s_yx / s_xy)
    ratio = np.where((s_xy <= 0) | (s_yx <= 0), np.inf, ratio)
    return ratio, clamped


def normal_pvalue(null: NullData, eta_hat: float, K: int = 100_000,
                  grid: Optional[QuantileGrid] = None,
                  rng: Optional[RngStream] = None,
                  min_seg: Optional[int] = None) -> float:
    return _normal_pvalue(null, eta_hat, K, grid, rng, min_seg)[0]


def _normal_pvalue(null, eta_hat, K, grid, rng, min_seg):
    rng = rng or RngStream(0)
    fxy = fit_direction(null.x0, null.y0, grid, min_seg)
    fyx = fit_direction(null.y0, null.x0, grid, min_seg)
    etas, clamped = normal_null_etas(SegmentStats.of(fxy), SegmentStats.of(fyx), K, rng)
    p = (1.0 + float(np.count_nonzero(etas >= eta_hat))) / (K + 1.0)
    return p, clamped


def direction_test(x, y, method: str = "normal", B: int = 500, K: int = 100_000,
                   grid: Optional[QuantileGrid] = None,
                   rng: Optional[RngStream] = None,
                   min_seg: Optional[int] = None) -> DirectionTest:
    """Fit both directions, pick the better one and test it against the null.

    Raises FitInfeasibleError if either direction cannot be fitted.
    """
    if method not in ("normal", "bootstrap"):
        raise ValueError(f"unknown method {method!r}")
    rng = rng or RngStream(0)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    fxy = fit_direction(x, y, grid, min_seg)
    fyx = fit_direction(y, x, grid, min_seg)
    flags = []
    tie = fxy.rbar2 == fyx.rbar2
    if tie:
        flags.append("tie")
    x_to_y = fxy.rbar2 >= fyx.rbar2
    eta_hat = eta(fxy.rbar2, fyx.rbar2)
    preferred = fxy if x_to_y else fyx
    if preferred.degenerate or fxy.degenerate or fyx.degenerate:
        flags.append("degenerate-fit")

    if math.isinf(eta_hat):
        # a zero score leaves nothing to test against
        flags.append("infinite-eta")
        return DirectionTest(x_to_y, eta_hat, 1.0, method, 0, fxy.rbar2, fyx.rbar2,
                             tie, fxy, fyx, None, tuple(flags))

    null = make_null(x, y, preferred, x_to_y)
    if method == "bootstrap":
        p = bootstrap_pvalue(null, eta_hat, B, grid, rng, min_seg)
        reps = B
    else:
        p, clamped = _normal_pvalue(null, eta_hat, K, grid, rng, min_seg)
        if clamped:
            flags.append("rho-clamped")
        reps = K
    return DirectionTest(x_to_y, eta_hat, p, method, reps, fxy.rbar2, fyx.rbar2,
                         tie, fxy, fyx, null, tuple(flags))
