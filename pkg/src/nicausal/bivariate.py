"""Bivariate causal verdict: independence screen, two-way fit, direction test."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .data import EdgeVerdict
from .direction import DirectionTest, direction_test
from .piecewise import FitInfeasibleError, QuantileGrid, min_segment_size
from .stats import RngStream, ci_test

__all__ = ["TestConfig", "screen_dependent", "bivariate_discover"]


@dataclass(frozen=True)
class TestConfig:
    """Settings of the direction test shared by the bivariate and graph algorithms."""

    __test__ = False  # not a pytest class despite the name

    method: str = "normal"
    B: int = 500
    K: int = 100_000
    grid: QuantileGrid = field(default_factory=QuantileGrid.default)
    min_segment: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("normal", "bootstrap"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.B < 1 or self.K < 1:
            raise ValueError("replicate counts must be positive")

    def with_(self, **kw) -> "TestConfig":
        return replace(self, **kw)

    def run(self, x, y, rng: Optional[RngStream] = None) -> DirectionTest:
        return direction_test(x, y, self.method, self.B, self.K, self.grid,
                              rng or RngStream(self.seed), self.min_segment)


def _split_rejects(axis: np.ndarray, a: np.ndarray, b: np.ndarray, tau: float,
                   alpha: float, min_seg: int) -> bool:
    low = axis <= tau
    for seg in (low, ~low):
        if seg.sum() < max(min_seg, 4):
            return False
        if ci_test(a[seg], b[seg], (), alpha).independent:
            return False
    return True


def screen_dependent(x, y, alpha: float, test: Optional[DirectionTest] = None,
                     min_seg: Optional[int] = None) -> tuple[bool, float]:
    """Marginal dependence screen. Returns ``(dependent, marginal p-value)``.

    The pair is dependent when the marginal Fisher-z test rejects or, given
    the two-way fit, when the correlation test rejects on both sides of the
    preferred fit's cut (a symmetric non-monotone relation has near-zero
    overall correlation but strong correlation within each piece).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    res = ci_test(x, y, (), alpha)
    if not res.independent:
        return True, res.p_value
    if test is None or test.preferred_fit is None:
        return False, res.p_value
    fit = test.preferred_fit
    axis = x if test.x_to_y else y
    m = min_segment_size(x.size) if min_seg is None else min_seg
    return _split_rejects(axis, x, y, fit.tau, alpha, m), res.p_value


def bivariate_discover(x, y, alpha: float = 0.01, cfg: Optional[TestConfig] = None,
                       rng: Optional[RngStream] = None,
                       independence_test: Optional[Callable] = None,
                       test_alpha: Optional[float] = None) -> EdgeVerdict:
    """Classify the pair as no edge, ``x -> y`` / ``y -> x``, or undirected.

    ``source``/``target`` in the verdict are 0 for ``x`` and 1 for ``y``.
    ``independence_test(x, y, alpha) -> bool`` (True = dependent) replaces
    the default screen. ``test_alpha`` overrides the direction-test level,
    which otherwise equals ``alpha``.
    """
    cfg = cfg or TestConfig()
    rng = rng or RngStream(cfg.seed)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d vectors of equal length")
    t_alpha = alpha if test_alpha is None else test_alpha
    min_seg = cfg.min_segment if cfg.min_segment is not None else min_segment_size(x.size)
    if x.size < 2 * min_seg:
        raise FitInfeasibleError(f"n={x.size} is below twice the segment minimum {min_seg}")

    try:
        test = cfg.run(x, y, rng)
    except FitInfeasibleError:
        test = None

    if independence_test is not None:
        dependent, screen_p = bool(independence_test(x, y, alpha)), None
    else:
        dependent, screen_p = screen_dependent(x, y, alpha, test, min_seg)
    if not dependent:
        return EdgeVerdict("none", test=test, screen_p=screen_p)
    if test is None:
        return EdgeVerdict("undirected", 0, 1, None, degenerate=True, screen_p=screen_p)
    src, dst = (0, 1) if test.x_to_y else (1, 0)
    if test.p_value <= t_alpha:
        return EdgeVerdict("directed", src, dst, test, screen_p=screen_p)
    return EdgeVerdict("undirected", 0, 1, test, screen_p=screen_p)
