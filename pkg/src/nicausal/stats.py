"""Correlation, Fisher z, residualization, CI testing and seeded random streams."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special

__all__ = [
    "DegenerateDataError",
    "RngStream",
    "CITestResult",
    "is_degenerate",
    "pearson",
    "fisher_z",
    "inverse_fisher_z",
    "residualize",
    "ci_test",
    "gauss_cdf",
    "gauss_quantile",
    "sample_normal",
]

# variance below this fraction of range**2 counts as zero
DEGENERATE_RTOL = 1e-12


class DegenerateDataError(ValueError):
    """Input has (numerically) zero variance."""


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream identified by ``(seed, stream)``.

    Generators are numpy ``PCG64`` seeded through ``SeedSequence(seed,
    spawn_key=(stream, *path))``; ``child(k)`` extends the spawn path, so
    every derived stream is fixed by its position alone and not by the order
    in which streams are requested.
    """

    seed: int
    stream: int = 0
    path: tuple[int, ...] = ()

    def seed_sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(self.seed, spawn_key=(self.stream, *self.path))

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed_sequence()))

    def child(self, *keys: int) -> "RngStream":
        return RngStream(self.seed, self.stream, self.path + tuple(int(k) for k in keys))


def is_degenerate(v: np.ndarray) -> bool:
    v = np.asarray(v, dtype=float)
    if v.size < 2:
        return True
    rng = float(np.ptp(v))
    if rng == 0.0:
        return True
    return float(np.var(v)) < DEGENERATE_RTOL * rng * rng


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("pearson needs two 1-d vectors of equal length")
    if x.size < 2:
        raise ValueError("pearson needs at least two samples")
    if is_degenerate(x) or is_degenerate(y):
        raise DegenerateDataError("zero-variance input to pearson")
    xc = x - x.mean()
    yc = y - y.mean()
    r = float(xc @ yc / math.sqrt(float(xc @ xc) * float(yc @ yc)))
    return min(1.0, max(-1.0, r))


def fisher_z(r: float) -> float:
    """Inverse hyperbolic tangent, 0.5*log((1+r)/(1-r))."""
    if not -1.0 < r < 1.0:
        raise ValueError(f"fisher_z needs |r| < 1, got {r}")
    return math.atanh(r)


def inverse_fisher_z(z):
    return np.tanh(z)


def residualize(y, Z: Sequence[np.ndarray] | np.ndarray = ()) -> np.ndarray:
    """OLS residuals of ``y`` on an intercept plus the columns in ``Z``.

    Solved with ``lstsq`` (SVD), so a rank-deficient design gives the
    minimum-norm solution rather than an error.
    """
    y = np.asarray(y, dtype=float)
    if isinstance(Z, np.ndarray) and Z.ndim == 2:
        cols = [Z[:, k] for k in range(Z.shape[1])]
    else:
        cols = [np.asarray(z, dtype=float) for z in Z]
    if not cols:
        return y - y.mean()
    if any(c.shape != y.shape for c in cols):
        raise ValueError("regressors must match the length of y")
    if len(cols) + 1 > y.size:
        raise ValueError("more regressors than samples")
    design = np.column_stack([np.ones_like(y)] + cols)
    # centering keeps the SVD well conditioned when columns have large means
    mu = design[:, 1:].mean(axis=0)
    design[:, 1:] -= mu
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return y - design @ coef


@dataclass(frozen=True)
class CITestResult:
    independent: bool
    statistic: float
    p_value: float
    r: float
    degenerate: bool = False


def _vanishes(resid: np.ndarray, original: np.ndarray) -> bool:
    span = float(np.ptp(original))
    return span == 0.0 or float(resid.var()) < DEGENERATE_RTOL * span * span


def ci_test(x, y, Z: Sequence[np.ndarray] = (), alpha: float = 0.01) -> CITestResult:
    """Fisher-z partial correlation test of ``x`` independent of ``y`` given ``Z``.

    Rejects when ``sqrt(n - |Z| - 3) * |atanh(r)| > Phi^-1(1 - alpha/2)``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    k = len(Z)
    dof = x.size - k - 3
    if dof < 1:
        raise ValueError(f"ci_test needs n - |Z| - 3 >= 1 (n={x.size}, |Z|={k})")
    ex = residualize(x, Z)
    ey = residualize(y, Z)
    # residual variance is judged against the variable's own scale
    if _vanishes(ex, x) or _vanishes(ey, y):
        return CITestResult(True, 0.0, 1.0, 0.0, degenerate=True)
    try:
        r = pearson(ex, ey)
    except DegenerateDataError:
        return CITestResult(True, 0.0, 1.0, 0.0, degenerate=True)
    if abs(r) >= 1.0:
        stat = math.inf
    else:
        stat = math.sqrt(dof) * abs(fisher_z(r))
    p = 2.0 * float(special.ndtr(-stat))
    return CITestResult(stat <= gauss_quantile(1.0 - alpha / 2.0), stat, p, r)


def gauss_cdf(x: float) -> float:
    return float(special.ndtr(x))


def gauss_quantile(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise ValueError(f"gauss_quantile needs 0 < p < 1, got {p}")
    return float(special.ndtri(p))


def sample_normal(rng: RngStream | np.random.Generator, mean: float, sd: float, k: int) -> np.ndarray:
    if sd <= 0:
        raise ValueError("sd must be positive")
    if k < 1:
        raise ValueError("k must be at least 1")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    return gen.normal(mean, sd, size=k)
