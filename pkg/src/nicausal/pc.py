"""Order-independent (stable) PC with Fisher-z partial correlation tests.

The skeleton phase freezes adjacencies per conditioning-set size. For
orientation every separating set found at a pair's removal level is kept
and an unshielded triple ``i - k - j`` becomes a collider when ``k`` is in
fewer than half of them; conflicting or cycle-forming collider arrows are
dropped. None of these choices depend on the column order.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional

import networkx as nx

from .data import Dataset, Pdag
from .graphops import meek_close
from .stats import ci_test

__all__ = ["SepsetTable", "CITester", "data_ci_tester", "skeleton_only", "orient_colliders", "pc_learn"]

# (i, j, conditioning set) -> True when i and j are judged independent
CITester = Callable[[int, int, tuple[int, ...]], bool]


@dataclass
class SepsetTable:
    """Separating sets of removed pairs, keyed by ``(i, j)`` with ``i < j``."""

    all_sets: dict[tuple[int, int], list[tuple[int, ...]]] = field(default_factory=dict)

    def __contains__(self, pair) -> bool:
        return _key(*pair) in self.all_sets

    def __getitem__(self, pair) -> tuple[int, ...]:
        return self.all_sets[_key(*pair)][0]

    def get(self, pair, default=None):
        sets = self.all_sets.get(_key(*pair))
        return sets[0] if sets else default

    def sets(self, pair) -> list[tuple[int, ...]]:
        return self.all_sets.get(_key(*pair), [])

    def pairs(self):
        return sorted(self.all_sets)


def _key(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i < j else (j, i)


def data_ci_tester(data: Dataset, alpha: float) -> CITester:
    X = data.values

    def test(i, j, S):
        return ci_test(X[:, i], X[:, j], [X[:, k] for k in S], alpha).independent

    return test


def skeleton_only(data: Optional[Dataset] = None, alpha: float = 0.01, max_cond: int = 3,
                  tester: Optional[CITester] = None, p: Optional[int] = None,
                  names=None) -> tuple[Pdag, SepsetTable]:
    """Stable skeleton search; returns the undirected skeleton and sepsets."""
    if tester is None:
        if data is None:
            raise ValueError("need data or a CI tester")
        if data.n <= max_cond + 3:
            raise ValueError(f"n={data.n} too small for conditioning sets of size {max_cond}")
        tester = data_ci_tester(data, alpha)
    if p is None:
        p = data.p
    if names is None and data is not None:
        names = data.names
    adj = [set(range(p)) - {i} for i in range(p)]
    table = SepsetTable()
    for level in range(max_cond + 1):
        frozen = [frozenset(a) for a in adj]
        if not any(len(frozen[i]) - 1 >= level for i in range(p)):
            break
        removed = []
        for i in range(p):
            for j in sorted(frozen[i]):
                if j < i:
                    continue
                cands = set(itertools.combinations(sorted(frozen[i] - {j}), level))
                cands |= set(itertools.combinations(sorted(frozen[j] - {i}), level))
                found = [S for S in sorted(cands) if tester(i, j, S)]
                if found:
                    table.all_sets[(i, j)] = found
                    removed.append((i, j))
        for i, j in removed:
            adj[i].discard(j)
            adj[j].discard(i)
    undirected = frozenset((i, j) for i in range(p) for j in adj[i] if i < j)
    return Pdag(p, frozenset(), undirected, names=names), table


def orient_colliders(skel: Pdag, sepsets: SepsetTable) -> Pdag:
    arrows = set()
    for k in range(skel.p):
        nb = sorted(skel.adjacent(k))
        for i, j in itertools.combinations(nb, 2):
            if skel.is_adjacent(i, j):
                continue
            sets = sepsets.sets((i, j))
            if not sets:
                continue
            hits = sum(k in S for S in sets)
            if 2 * hits < len(sets):
                arrows.add((i, k))
                arrows.add((j, k))
    # an edge proposed both ways stays undirected
    arrows = {(a, b) for a, b in arrows if (b, a) not in arrows}
    # arrows lying on a directed cycle are dropped as a group
    dg = nx.DiGraph()
    dg.add_edges_from(arrows)
    cyclic = set()
    for comp in nx.strongly_connected_components(dg):
        if len(comp) > 1:
            cyclic |= {(a, b) for a, b in arrows if a in comp and b in comp}
    arrows -= cyclic
    undirected = frozenset(e for e in skel.undirected
                           if e not in arrows and (e[1], e[0]) not in arrows)
    return skel.replace(directed=frozenset(arrows), undirected=undirected)


def pc_learn(data: Optional[Dataset] = None, alpha: float = 0.01, max_cond: int = 3,
             tester: Optional[CITester] = None, p: Optional[int] = None,
             names=None) -> Pdag:
    """Skeleton, collider orientation, then Meek closure."""
    skel, sepsets = skeleton_only(data, alpha, max_cond, tester, p, names)
    return meek_close(orient_colliders(skel, sepsets))
