"""Orientation propagation and conversions between DAGs, CPDAGs and PDAGs."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

from .data import GraphError, Pdag, directed_is_acyclic

__all__ = [
    "OrientationLog",
    "meek_close",
    "v_structures",
    "dag_to_cpdag",
    "pdag_to_dag",
    "replay",
]


@dataclass
class OrientationLog:
    """Ordered ``(i, j, rule)`` records of ``i -> j`` orientations.

    ``rule`` is a Meek rule number 1-4 or a tag such as ``"nncl"`` for edges
    committed by a direction test.
    """

    records: list[tuple[int, int, int | str]] = field(default_factory=list)

    def add(self, i: int, j: int, rule: int | str) -> None:
        self.records.append((i, j, rule))

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)


class _Work:
    """Mutable adjacency view used while propagating orientations."""

    def __init__(self, g: Pdag):
        self.p = g.p
        self.out = [set() for _ in range(g.p)]
        self.inn = [set() for _ in range(g.p)]
        self.und = [set() for _ in range(g.p)]
        for i, j in g.directed:
            self.out[i].add(j)
            self.inn[j].add(i)
        for i, j in g.undirected:
            self.und[i].add(j)
            self.und[j].add(i)

    def adj(self, i: int, j: int) -> bool:
        return j in self.out[i] or j in self.inn[i] or j in self.und[i]

    def reaches(self, src: int, dst: int) -> bool:
        stack, seen = [src], {src}
        while stack:
            v = stack.pop()
            if v == dst:
                return True
            for w in self.out[v]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return False

    def orient(self, i: int, j: int) -> None:
        self.und[i].discard(j)
        self.und[j].discard(i)
        self.out[i].add(j)
        self.inn[j].add(i)

    def rule(self, i: int, j: int) -> int:
        """First Meek rule (1-4) compelling ``i -> j`` for the undirected ``i -- j``, else 0."""
        # R1: k -> i -- j, k and j non-adjacent
        for k in self.inn[i]:
            if not self.adj(k, j):
                return 1
        # R2: i -> k -> j
        if self.out[i] & self.inn[j]:
            return 2
        # R3: i -- k -> j, i -- l -> j, k and l non-adjacent
        ks = sorted(self.und[i] & self.inn[j])
        for a in range(len(ks)):
            for b in range(a + 1, len(ks)):
                if not self.adj(ks[a], ks[b]):
                    return 3
        # R4: i -- k -> l -> j, k and j non-adjacent, i adjacent to l
        for k in self.und[i]:
            if self.adj(k, j):
                continue
            for l in self.out[k] & self.inn[j]:
                if self.adj(i, l):
                    return 4
        return 0

    def to_pdag(self, g: Pdag) -> Pdag:
        directed = {(i, j) for i in range(self.p) for j in self.out[i]}
        undirected = {(i, j) for i in range(self.p) for j in self.und[i] if i < j}
        return g.replace(directed=frozenset(directed), undirected=frozenset(undirected),
                         nonlinear=g.nonlinear & frozenset(directed))


def meek_close(g: Pdag, log: Optional[OrientationLog] = None) -> Pdag:
    """Apply Meek's rules 1-4 until none fires.

    Sweeps undirected edges in ascending order, trying ``i -> j`` before
    ``j -> i`` and rules in numeric order. An orientation that would close a
    directed cycle is skipped. Pass ``log`` to collect the orientations.
    """
    if not g.is_acyclic():
        raise GraphError("meek_close needs an acyclic directed part")
    w = _Work(g)
    changed = True
    while changed:
        changed = False
        pairs = sorted((i, j) for i in range(w.p) for j in w.und[i] if i < j)
        for a, b in pairs:
            if b not in w.und[a]:
                continue
            for i, j in ((a, b), (b, a)):
                r = w.rule(i, j)
                if r and not w.reaches(j, i):
                    w.orient(i, j)
                    if log is not None:
                        log.add(i, j, r)
                    changed = True
                    break
    return w.to_pdag(g)


def replay(g: Pdag, records: Iterable[tuple[int, int, int | str]]) -> Pdag:
    """Re-apply logged orientations; tagged (non-Meek) commits are nonlinear."""
    out = g
    for i, j, rule in records:
        out = out.orient(i, j, nonlinear=isinstance(rule, str))
    return out


def v_structures(g: Pdag) -> set[tuple[int, int, int]]:
    """Unshielded colliders ``(a, c, b)`` with ``a -> c <- b``, ``a < b``, a and b non-adjacent."""
    out = set()
    for c in range(g.p):
        pa = sorted(g.parents(c))
        for x in range(len(pa)):
            for y in range(x + 1, len(pa)):
                if not g.is_adjacent(pa[x], pa[y]):
                    out.add((pa[x], c, pa[y]))
    return out


def dag_to_cpdag(g: Pdag, fixed: Iterable[tuple[int, int]] = ()) -> Pdag:
    """(Restricted) CPDAG of a DAG.

    Keeps v-structure edges and the ``fixed`` edges directed, leaves the rest
    of the skeleton undirected, then closes under Meek's rules. With no fixed
    edges this is the CPDAG of the Markov equivalence class.
    """
    if g.undirected or not g.is_acyclic():
        raise GraphError("dag_to_cpdag needs a fully directed acyclic graph")
    fixed = {(int(i), int(j)) for i, j in fixed}
    missing = fixed - g.directed
    if missing:
        raise GraphError(f"fixed edges not in the DAG: {sorted(missing)}")
    keep = set(fixed)
    for a, c, b in v_structures(g):
        keep.add((a, c))
        keep.add((b, c))
    undirected = {(min(i, j), max(i, j)) for i, j in g.directed - keep}
    pattern = g.replace(directed=frozenset(keep), undirected=frozenset(undirected),
                        nonlinear=g.nonlinear & frozenset(keep))
    return meek_close(pattern)


def pdag_to_dag(g: Pdag) -> Pdag:
    """A consistent DAG extension (Dor and Tarsi's sink elimination).

    Among admissible sinks the lowest index is removed first. Raises
    GraphError if no extension exists.
    """
    if not g.is_acyclic():
        raise GraphError("directed part is cyclic; no extension exists")
    w = _Work(g)
    alive = set(range(g.p))
    directed = set(g.directed)
    while alive:
        for x in sorted(alive):
            if w.out[x] & alive:
                continue
            nbrs = w.und[x] & alive
            adj_x = (w.inn[x] | w.und[x]) & alive
            if all(all(w.adj(y, z) for z in adj_x if z != y) for y in nbrs):
                for y in nbrs:
                    directed.add((y, x))
                alive.discard(x)
                break
        else:
            raise GraphError("PDAG admits no consistent DAG extension")
    if not directed_is_acyclic(g.p, directed):
        raise GraphError("PDAG admits no consistent DAG extension")
    return g.replace(directed=frozenset(directed), undirected=frozenset())
