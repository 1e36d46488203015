"""Non-invertible edge discovery on a PDAG.

``nncl_orient`` tests the undirected edges of an initial graph on
parent-adjusted residuals and commits the most significant non-invertible
direction one edge at a time; ``outside_search`` scans the non-adjacent
pairs once for edges the initial learner missed; ``consensus`` filters a
pipeline's output by bootstrap edge frequencies.
"""

from __future__ import annotations

import logging
import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .bivariate import TestConfig
from .data import Dataset, GraphError, Pdag
from .direction import DirectionTest
from .graphops import OrientationLog, dag_to_cpdag, meek_close
from .pc import pc_learn
from .piecewise import FitInfeasibleError, fit_direction, min_segment_size
from .stats import RngStream, ci_test, residualize

__all__ = [
    "ResidualStore",
    "residuals_for",
    "SegmentedCI",
    "segmented_ci",
    "EdgeCandidate",
    "NNCLReport",
    "nncl_orient",
    "outside_search",
    "Pipeline",
    "ConsensusResult",
    "consensus_weights",
    "filter_by_weights",
    "consensus",
]

log = logging.getLogger(__name__)

PHASE_KEYS = {"nncl": 0, "outside": 1}


def _signature(g: Pdag, v: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    return tuple(sorted(g.linear_parents(v))), tuple(sorted(g.nonlinear_parents(v)))


def _sig_key(sig) -> int:
    return zlib.crc32(repr(sig).encode())


class ResidualStore:
    """Residuals of each node on its current parents, with committed fits.

    ``contributions[(k, v)]`` holds the fitted values of the two-piece fit of
    ``v`` on ``k`` accepted when ``k -> v`` was committed. A node's residual
    is recomputed only when its parent signature changes.
    """

    def __init__(self, data: Dataset):
        self.data = data
        self.contributions: dict[tuple[int, int], np.ndarray] = {}
        self._cache: dict[int, tuple[tuple, np.ndarray]] = {}

    def residuals(self, v: int, g: Pdag) -> np.ndarray:
        sig = _signature(g, v)
        hit = self._cache.get(v)
        if hit is not None and hit[0] == sig:
            return hit[1]
        lin, nl = sig
        X = self.data.values
        target = X[:, v].copy()
        for k in nl:
            if (k, v) not in self.contributions:
                self.contributions[(k, v)] = self._fit_contribution(k, v, g)
            target = target - self.contributions[(k, v)]
        res = residualize(target, [X[:, k] for k in lin])
        self._cache[v] = (sig, res)
        return res

    def _fit_contribution(self, k: int, v: int, g: Pdag) -> np.ndarray:
        # nonlinear edge supplied by the initial graph without a fit
        X = self.data.values
        axis = self.residuals(k, g)
        lin = sorted(g.linear_parents(v))
        child = residualize(X[:, v], [X[:, u] for u in lin])
        try:
            return fit_direction(axis, child).predict(axis)
        except FitInfeasibleError:
            return np.zeros_like(axis)

    def commit(self, k: int, v: int, fitted: np.ndarray) -> None:
        self.contributions[(k, v)] = np.asarray(fitted, dtype=float)
        self._cache.pop(v, None)


def residuals_for(node: int, g: Pdag, data: Dataset,
                  fits: Optional[dict[tuple[int, int], np.ndarray]] = None) -> np.ndarray:
    """Residual of ``node`` on its parents in ``g``.

    Linear parents are regressed out by OLS; for each nonlinear parent ``k``
    the stored fitted contribution ``fits[(k, node)]`` is subtracted first.
    """
    store = ResidualStore(data)
    if fits:
        store.contributions.update({k: np.asarray(f, float) for k, f in fits.items()})
    return store.residuals(node, g)


@dataclass(frozen=True)
class SegmentedCI:
    dependent: bool
    p_low: float = math.nan
    p_high: float = math.nan
    too_small: bool = False

    def to_json(self) -> dict:
        return {
            "dependent": self.dependent,
            "p_low": None if math.isnan(self.p_low) else self.p_low,
            "p_high": None if math.isnan(self.p_high) else self.p_high,
            "too_small": self.too_small,
        }


def segmented_ci(vp: int, vc: int, g: Pdag, data: Dataset, tau: float, alpha: float,
                 axis: Optional[np.ndarray] = None,
                 min_seg: Optional[int] = None) -> SegmentedCI:
    """Test ``vp`` against ``vc`` given ``vc``'s parents, separately on each
    side of ``tau``; dependent only if both sides reject.

    ``axis`` is the variable the cut applies to (defaults to column ``vp``).
    A side too small for the test makes the verdict independent.
    """
    X = data.values
    axis = X[:, vp] if axis is None else np.asarray(axis, dtype=float)
    pa = sorted(g.parents(vc) - {vp})
    m = min_segment_size(data.n) if min_seg is None else int(min_seg)
    m = max(m, len(pa) + 4)
    low = axis <= tau
    ps = []
    for seg in (low, ~low):
        if int(seg.sum()) < m:
            return SegmentedCI(False, too_small=True)
        res = ci_test(X[seg, vp], X[seg, vc], [X[seg, k] for k in pa], alpha)
        ps.append(res.p_value)
        if res.independent:
            return SegmentedCI(False, *(ps + [math.nan] * (2 - len(ps))))
    return SegmentedCI(True, ps[0], ps[1])


@dataclass
class EdgeCandidate:
    """Direction test of the pair ``(i, j)`` on parent-adjusted residuals."""

    i: int
    j: int
    test: Optional[DirectionTest] = field(repr=False)
    provenance: dict = field(default_factory=dict)
    phase: str = "nncl"
    segmented: Optional[SegmentedCI] = None
    committed: bool = False
    error: Optional[str] = None

    @property
    def eta(self) -> float:
        return self.test.eta_hat if self.test else math.nan

    @property
    def p_value(self) -> float:
        return self.test.p_value if self.test else math.nan

    @property
    def parent(self) -> int:
        return self.i if self.test.x_to_y else self.j

    @property
    def child(self) -> int:
        return self.j if self.test.x_to_y else self.i

    def sort_key(self):
        return (self.p_value, -self.eta, self.i, self.j)

    def to_json(self, g: Pdag) -> dict:
        out = {
            "pair": [g.name(self.i), g.name(self.j)],
            "phase": self.phase,
            "committed": self.committed,
            "provenance": {g.name(int(k)): v for k, v in self.provenance.items()},
        }
        if self.test is None:
            out["error"] = self.error
            return out
        t = self.test
        out.update({
            "from": g.name(self.parent),
            "to": g.name(self.child),
            "eta": _num(t.eta_hat),
            "p_value": t.p_value,
            "method": t.method,
            "rbar2": {"forward": t.rbar2_xy, "backward": t.rbar2_yx},
            "tau": t.preferred_fit.tau,
            "flags": list(t.flags),
        })
        if self.segmented is not None:
            out["segmented_ci"] = self.segmented.to_json()
        return out


def _num(v: float):
    return v if math.isfinite(v) else str(v)


@dataclass
class NNCLReport:
    """Everything the search did: Meek and commit log, commits, latest tests."""

    log: OrientationLog = field(default_factory=OrientationLog)
    commits: list[EdgeCandidate] = field(default_factory=list)
    latest: dict[tuple[int, int], EdgeCandidate] = field(default_factory=dict)

    def to_json(self, g: Pdag) -> dict:
        return {
            "orientation_log": [
                {"from": g.name(i), "to": g.name(j), "rule": r} for i, j, r in self.log
            ],
            "commits": [c.to_json(g) for c in self.commits],
            "tests": [self.latest[k].to_json(g) for k in sorted(self.latest)],
        }


class _Searcher:
    def __init__(self, data: Dataset, alpha: float, cfg: TestConfig, ci_alpha: float,
                 rng: RngStream, store: ResidualStore, report: NNCLReport, workers: int):
        if not 0.0 < alpha < 1.0 or not 0.0 < ci_alpha < 1.0:
            raise ValueError("significance levels must lie in (0, 1)")
        self.data = data
        self.alpha = alpha
        self.cfg = cfg
        self.ci_alpha = ci_alpha
        self.rng = rng
        self.store = store
        self.report = report
        self.workers = max(1, int(workers))
        self._tests: dict[tuple, EdgeCandidate] = {}

    def candidate(self, g: Pdag, i: int, j: int, phase: str) -> EdgeCandidate:
        si, sj = _signature(g, i), _signature(g, j)
        key = (i, j, si, sj, phase)
        hit = self._tests.get(key)
        if hit is not None:
            return hit
        prov = {
            i: {"linear": list(si[0]), "nonlinear": list(si[1])},
            j: {"linear": list(sj[0]), "nonlinear": list(sj[1])},
        }
        x = self.store.residuals(i, g)
        y = self.store.residuals(j, g)
        stream = self.rng.child(PHASE_KEYS[phase], i, j, _sig_key(si), _sig_key(sj))
        try:
            test = self.cfg.run(x, y, stream)
            cand = EdgeCandidate(i, j, test, prov, phase)
        except FitInfeasibleError as exc:
            cand = EdgeCandidate(i, j, None, prov, phase, error=str(exc))
        self._tests[key] = cand
        return cand

    def candidates(self, g: Pdag, pairs, phase: str) -> list[EdgeCandidate]:
        # warm residuals serially so worker threads only read the cache
        for i, j in pairs:
            self.store.residuals(i, g)
            self.store.residuals(j, g)
        if self.workers == 1 or len(pairs) < 2:
            return [self.candidate(g, i, j, phase) for i, j in pairs]
        with ThreadPoolExecutor(self.workers) as ex:
            return list(ex.map(lambda e: self.candidate(g, e[0], e[1], phase), pairs))

    def try_commit(self, g: Pdag, cand: EdgeCandidate) -> Optional[Pdag]:
        if cand.test is None or not cand.p_value <= self.alpha:
            return None
        vp, vc = cand.parent, cand.child
        if g.creates_cycle(vp, vc):
            return None
        axis = self.store.residuals(vp, g)
        fit = cand.test.preferred_fit
        seg = segmented_ci(vp, vc, g, self.data, fit.tau, self.ci_alpha, axis=axis,
                           min_seg=self.cfg.min_segment)
        cand.segmented = seg
        if not seg.dependent:
            return None
        fitted = fit.predict(axis)
        g = g.orient(vp, vc, nonlinear=True)
        self.store.commit(vp, vc, fitted)
        cand.committed = True
        self.report.commits.append(cand)
        self.report.log.add(vp, vc, cand.phase)
        g = meek_close(g, self.report.log)
        if not g.is_acyclic():
            raise GraphError("commit produced a directed cycle")
        log.debug("committed %s -> %s (p=%.3g, eta=%.3g)", g.name(vp), g.name(vc),
                  cand.p_value, cand.eta)
        return g


def _setup(data, alpha, cfg, ci_alpha, rng, store, report, workers):
    cfg = cfg or TestConfig()
    ci_alpha = alpha if ci_alpha is None else ci_alpha
    rng = rng or RngStream(cfg.seed)
    store = store or ResidualStore(data)
    report = report if report is not None else NNCLReport()
    return _Searcher(data, alpha, cfg, ci_alpha, rng, store, report, workers)


def nncl_orient(data: Dataset, g0: Pdag, alpha: float = 0.01, cfg: Optional[TestConfig] = None,
                ci_alpha: Optional[float] = None, rng: Optional[RngStream] = None,
                store: Optional[ResidualStore] = None, report: Optional[NNCLReport] = None,
                workers: int = 1) -> Pdag:
    """Orient undirected edges of ``g0`` that carry a non-invertible relation.

    Each round tests every undirected pair on residuals adjusted for the
    current parents and walks the pairs in order of p-value (larger eta
    first on ties). The first pair with ``p <= alpha`` whose segmented CI
    test is dependent and whose orientation keeps the graph acyclic is
    committed as a nonlinear edge, followed by Meek closure. The search
    stops when a round commits nothing.
    """
    if g0.p != data.p:
        raise GraphError("graph and data have different node counts")
    if not g0.is_acyclic():
        raise GraphError("initial graph has a directed cycle")
    s = _setup(data, alpha, cfg, ci_alpha, rng, store, report, workers)
    g = g0
    while True:
        pairs = g.undirected_pairs()
        if not pairs:
            break
        cands = s.candidates(g, pairs, "nncl")
        for c in cands:
            s.report.latest[(c.i, c.j)] = c
        ranked = sorted((c for c in cands if c.test is not None), key=EdgeCandidate.sort_key)
        nxt = None
        for c in ranked:
            if not c.p_value <= s.alpha:
                break
            nxt = s.try_commit(g, c)
            if nxt is not None:
                break
        if nxt is None:
            break
        g = nxt
    return g


def outside_search(data: Dataset, g: Pdag, alpha: float = 0.01, cfg: Optional[TestConfig] = None,
                   ci_alpha: Optional[float] = None, rng: Optional[RngStream] = None,
                   store: Optional[ResidualStore] = None, report: Optional[NNCLReport] = None,
                   workers: int = 1) -> Pdag:
    """One ascending pass over the non-adjacent pairs of ``g``.

    A pair is committed as a nonlinear directed edge when its residual
    direction test has ``p <= alpha``, the segmented CI test is dependent
    and the edge keeps the graph acyclic; Meek closure follows each commit.
    """
    if g.p != data.p:
        raise GraphError("graph and data have different node counts")
    if not g.is_acyclic():
        raise GraphError("graph has a directed cycle")
    s = _setup(data, alpha, cfg, ci_alpha, rng, store, report, workers)
    for i, j in g.non_adjacent_pairs():
        if g.is_adjacent(i, j):
            continue
        c = s.candidate(g, i, j, "outside")
        s.report.latest[(i, j)] = c
        nxt = s.try_commit(g, c)
        if nxt is not None:
            g = nxt
    return g


@dataclass(frozen=True)
class Pipeline:
    """Initial graph (PC, a supplied PDAG, or empty), then NNCL and the outside search.

    A fully directed initial graph is first reduced to its CPDAG, keeping its
    nonlinear-flagged edges fixed.
    """

    learner: str = "pc"
    initial: Optional[Pdag] = None
    outside: bool = True
    alpha: float = 0.01
    ci_alpha: float = 0.01
    max_cond: int = 3
    test: TestConfig = field(default_factory=TestConfig)
    workers: int = 1

    def __post_init__(self):
        if self.learner not in ("pc", "none"):
            raise ValueError(f"unknown learner {self.learner!r}")
        if not (0 < self.alpha < 1 and 0 < self.ci_alpha < 1):
            raise ValueError("significance levels must lie in (0, 1)")
        if self.max_cond < 0:
            raise ValueError("max_cond must be non-negative")

    def initial_graph(self, data: Dataset) -> Pdag:
        if self.initial is not None:
            g = self.initial
            if g.p != data.p:
                raise GraphError("initial graph and data have different node counts")
            if not g.is_acyclic():
                raise GraphError("initial graph has a directed cycle")
            if g.directed and not g.undirected:
                g = dag_to_cpdag(g, g.nonlinear)
            return g.with_names(data.names)
        if self.learner == "pc":
            return pc_learn(data, self.ci_alpha, self.max_cond)
        return Pdag(data.p, names=data.names)

    def run(self, data: Dataset, rng: RngStream, report: Optional[NNCLReport] = None,
            g0: Optional[Pdag] = None) -> Pdag:
        if g0 is None:
            g0 = self.initial_graph(data)
        store = ResidualStore(data)
        report = report if report is not None else NNCLReport()
        kw = dict(alpha=self.alpha, cfg=self.test, ci_alpha=self.ci_alpha, rng=rng,
                  store=store, report=report, workers=self.workers)
        g = nncl_orient(data, g0, **kw)
        if self.outside:
            g = outside_search(data, g, **kw)
        return g


@dataclass(frozen=True)
class ConsensusResult:
    graph: Pdag
    point: Pdag
    weights: np.ndarray = field(repr=False)
    replicates: int
    dropped: int


def consensus_weights(graphs: list[Pdag]) -> np.ndarray:
    """``w[i, j]`` = fraction of graphs with ``i -> j``; an undirected edge adds half each way."""
    if not graphs:
        raise ValueError("no graphs to average")
    p = graphs[0].p
    w = np.zeros((p, p))
    for g in graphs:
        for i, j in g.directed:
            w[i, j] += 1.0
        for i, j in g.undirected:
            w[i, j] += 0.5
            w[j, i] += 0.5
    return w / len(graphs)


def filter_by_weights(point: Pdag, w: np.ndarray, threshold: float) -> Pdag:
    """Keep ``i -> j`` if ``w_ij >= t``; demote it to undirected if only
    ``w_ij + w_ji >= t``; otherwise delete it. An undirected edge stays iff
    ``w_ij + w_ji >= t``."""
    eps = 1e-12
    directed, undirected = set(), set()
    for i, j in point.directed:
        if w[i, j] >= threshold - eps:
            directed.add((i, j))
        elif w[i, j] + w[j, i] >= threshold - eps:
            undirected.add((min(i, j), max(i, j)))
    for i, j in point.undirected:
        if w[i, j] + w[j, i] >= threshold - eps:
            undirected.add((i, j))
    return point.replace(directed=frozenset(directed), undirected=frozenset(undirected),
                         nonlinear=point.nonlinear & frozenset(directed))


def consensus(data: Dataset, pipeline: Callable[[Dataset, RngStream], Pdag] | Pipeline,
              R: int = 100, threshold: float = 0.6, seed: int = 0,
              point: Optional[Pdag] = None, workers: int = 1) -> ConsensusResult:
    """Bootstrap consensus: rerun the pipeline on ``R`` resamples of the rows
    and filter the point estimate by the edge frequencies.

    Replicate ``r`` draws its rows from stream ``(seed, r + 1)``; a replicate
    whose pipeline raises is dropped and logged.
    """
    if R < 2:
        raise ValueError("need at least two bootstrap replicates")
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must lie in (0, 1]")
    run = pipeline.run if isinstance(pipeline, Pipeline) else pipeline
    if point is None:
        point = run(data, RngStream(seed, 0))

    def one(r: int) -> Optional[Pdag]:
        base = RngStream(seed, r + 1)
        rows = base.child(0).generator().integers(0, data.n, data.n)
        try:
            return run(data.take(rows), base.child(1))
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            log.warning("bootstrap replicate %d dropped: %s", r, exc)
            return None

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(one, range(R)))
    else:
        results = [one(r) for r in range(R)]
    graphs = [g for g in results if g is not None]
    if not graphs:
        raise ValueError("every bootstrap replicate failed")
    w = consensus_weights(graphs)
    return ConsensusResult(filter_by_weights(point, w, threshold), point, w,
                           len(graphs), R - len(graphs))
