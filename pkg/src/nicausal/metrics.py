"""Structural accuracy of PDAG estimates and held-out Gaussian likelihood."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .data import Dataset, GraphError, Pdag
from .graphops import pdag_to_dag

__all__ = ["GraphScore", "shd", "jaccard", "tp_fp", "score", "holdout_loglik"]

VAR_FLOOR = 1e-8


@dataclass(frozen=True)
class GraphScore:
    shd: int
    ji: float
    tp: int
    fp: int

    def to_json(self) -> dict:
        return asdict(self)


def _marks(g: Pdag) -> dict[tuple[int, int], str]:
    """Unordered pair ``(i, j)``, ``i < j`` -> '->', '<-' or '--'."""
    out = {}
    for i, j in g.directed:
        out[(min(i, j), max(i, j))] = "->" if i < j else "<-"
    for i, j in g.undirected:
        out[(i, j)] = "--"
    return out


def _check(g1: Pdag, g2: Pdag) -> None:
    if g1.p != g2.p:
        raise GraphError(f"graphs have different node counts ({g1.p} vs {g2.p})")


def shd(g1: Pdag, g2: Pdag) -> int:
    """Pairs whose presence or edge mark differs."""
    _check(g1, g2)
    m1, m2 = _marks(g1), _marks(g2)
    return sum(m1.get(e) != m2.get(e) for e in set(m1) | set(m2))


def jaccard(g1: Pdag, g2: Pdag) -> float:
    """Exactly matching edges over the union of adjacent pairs; 1 for two empty graphs."""
    _check(g1, g2)
    m1, m2 = _marks(g1), _marks(g2)
    union = set(m1) | set(m2)
    if not union:
        return 1.0
    return sum(m1.get(e) == m2.get(e) for e in union) / len(union)


def tp_fp(estimate: Pdag, truth: Pdag) -> tuple[int, int]:
    """TP: edges matching truth in pair and mark. FP: edges on pairs truth lacks.

    A correct pair with the wrong mark is neither; SHD counts it.
    """
    _check(estimate, truth)
    me, mt = _marks(estimate), _marks(truth)
    tp = sum(mt.get(e) == m for e, m in me.items())
    fp = sum(e not in mt for e in me)
    return tp, fp


def score(estimate: Pdag, truth: Pdag) -> GraphScore:
    tp, fp = tp_fp(estimate, truth)
    return GraphScore(shd(estimate, truth), jaccard(estimate, truth), tp, fp)


def _design(X: np.ndarray, lin: list[int], nl: list[int]) -> np.ndarray:
    cols = [np.ones(X.shape[0])]
    cols += [X[:, k] for k in lin]
    for k in nl:
        cols += [X[:, k], X[:, k] ** 2]
    return np.column_stack(cols)


def holdout_loglik(g: Pdag, train: Dataset, test: Dataset) -> float:
    """Test-set Gaussian log-likelihood of the graph's SEM fitted on ``train``.

    The PDAG is first extended to a DAG. Each node is regressed on its linear
    parents and on ``x, x^2`` of its nonlinear parents; the residual variance
    is the training MLE, floored at 1e-8.
    """
    if train.names != test.names:
        raise ValueError("train and test must share the same columns")
    if g.p != train.p:
        raise GraphError("graph and data have different node counts")
    dag = pdag_to_dag(g)
    Xtr, Xte = train.values, test.values
    total = 0.0
    for v in range(dag.p):
        pa = sorted(dag.parents(v))
        nl = [k for k in pa if (k, v) in dag.nonlinear]
        lin = [k for k in pa if (k, v) not in dag.nonlinear]
        A = _design(Xtr, lin, nl)
        coef, *_ = np.linalg.lstsq(A, Xtr[:, v], rcond=None)
        var = max(float(np.mean((Xtr[:, v] - A @ coef) ** 2)), VAR_FLOOR)
        r = Xte[:, v] - _design(Xte, lin, nl) @ coef
        total += float(-0.5 * r.size * math.log(2 * math.pi * var) - 0.5 * np.sum(r * r) / var)
    return total
