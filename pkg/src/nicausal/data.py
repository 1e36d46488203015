"""Datasets, partially directed graphs, and their file formats."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

__all__ = [
    "DataError",
    "GraphError",
    "Dataset",
    "Pdag",
    "EdgeVerdict",
    "read_csv",
    "write_csv",
    "parse_edgelist",
    "format_edgelist",
    "read_edgelist",
    "write_edgelist",
]


class DataError(ValueError):
    """Malformed or non-finite input data."""


class GraphError(ValueError):
    """Malformed graph input or a violated graph precondition."""


@dataclass(frozen=True)
class Dataset:
    """An observational sample: one named numeric column per variable.

    Values are stored as a read-only ``(n, p)`` float array so column ``k``
    is ``values[:, k]``.
    """

    names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        names = tuple(str(s) for s in self.names)
        values = np.array(self.values, dtype=float, copy=True)
        if values.ndim != 2:
            raise DataError("values must be a 2-d array (samples x variables)")
        if values.shape[0] < 1:
            raise DataError("dataset needs at least one sample")
        if values.shape[1] != len(names):
            raise DataError(
                f"{len(names)} names given for {values.shape[1]} columns"
            )
        if any(not s for s in names):
            raise DataError("variable names must be non-empty")
        if len(set(names)) != len(names):
            raise DataError("variable names must be unique")
        if not np.all(np.isfinite(values)):
            raise DataError("dataset contains NaN or infinite values")
        values.setflags(write=False)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_columns(cls, names: Sequence[str], columns: Sequence[Sequence[float]]) -> "Dataset":
        lengths = {len(c) for c in columns}
        if len(lengths) > 1:
            raise DataError(f"columns have unequal lengths {sorted(lengths)}")
        return cls(tuple(names), np.column_stack([np.asarray(c, float) for c in columns]))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def column(self, key: int | str) -> np.ndarray:
        if isinstance(key, str):
            key = self.index(key)
        return self.values[:, key]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown variable {name!r}") from None

    def take(self, rows: Sequence[int] | np.ndarray) -> "Dataset":
        """Row subset (or bootstrap resample when ``rows`` repeats)."""
        return Dataset(self.names, self.values[np.asarray(rows)])


def read_csv(path: str | Path) -> Dataset:
    """Read a header-plus-numeric-rows CSV file.

    Raises DataError on ragged rows, non-numeric cells, or missing values.
    """
    with open(path, newline="") as fh:
        return _parse_csv(fh, str(path))


def _parse_csv(fh, source: str) -> Dataset:
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise DataError(f"{source}: empty file") from None
    header = [h.strip() for h in header]
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataError(
                f"{source}:{lineno}: expected {len(header)} fields, got {len(row)}"
            )
        try:
            vals = [float(c) for c in row]
        except ValueError:
            raise DataError(f"{source}:{lineno}: non-numeric value") from None
        if not all(math.isfinite(v) for v in vals):
            raise DataError(f"{source}:{lineno}: missing or non-finite value")
        rows.append(vals)
    if not rows:
        raise DataError(f"{source}: no data rows")
    return Dataset(tuple(header), np.array(rows, dtype=float))


def write_csv(data: Dataset, path: str | Path | None = None) -> str:
    """Serialise ``data``; values use ``repr`` so a read round-trips exactly."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(data.names)
    for row in data.values:
        writer.writerow([repr(float(v)) for v in row])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


@dataclass(frozen=True)
class Pdag:
    """Partially directed graph over nodes ``0..p-1``.

    ``directed`` holds ``(i, j)`` for ``i -> j``; ``undirected`` holds
    ``(i, j)`` with ``i < j`` for ``i -- j``; ``nonlinear`` flags a subset of
    the directed edges.
    """

    p: int
    directed: frozenset = frozenset()
    undirected: frozenset = frozenset()
    nonlinear: frozenset = frozenset()
    names: Optional[tuple[str, ...]] = field(default=None, compare=False)

    def __post_init__(self):
        directed = frozenset((int(i), int(j)) for i, j in self.directed)
        undirected = frozenset(
            (min(int(i), int(j)), max(int(i), int(j))) for i, j in self.undirected
        )
        nonlinear = frozenset((int(i), int(j)) for i, j in self.nonlinear)
        object.__setattr__(self, "directed", directed)
        object.__setattr__(self, "undirected", undirected)
        object.__setattr__(self, "nonlinear", nonlinear)
        if self.names is not None:
            names = tuple(self.names)
            if len(names) != self.p:
                raise GraphError(f"{len(names)} names for {self.p} nodes")
            object.__setattr__(self, "names", names)

        seen = set()
        for i, j in list(directed) + list(undirected):
            if i == j:
                raise GraphError(f"self-loop on node {i}")
            if not (0 <= i < self.p and 0 <= j < self.p):
                raise GraphError(f"edge ({i}, {j}) out of range for p={self.p}")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise GraphError(f"more than one edge between {key[0]} and {key[1]}")
            seen.add(key)
        if not nonlinear <= directed:
            raise GraphError("nonlinear edges must be directed edges")

    # ------------------------------------------------------------------ queries

    def _check_node(self, i: int) -> None:
        if not 0 <= i < self.p:
            raise GraphError(f"node {i} out of range for p={self.p}")

    def parents(self, i: int) -> set[int]:
        self._check_node(i)
        return {a for a, b in self.directed if b == i}

    def children(self, i: int) -> set[int]:
        self._check_node(i)
        return {b for a, b in self.directed if a == i}

    def neighbors(self, i: int) -> set[int]:
        """Nodes joined to ``i`` by an undirected edge."""
        self._check_node(i)
        return {b if a == i else a for a, b in self.undirected if i in (a, b)}

    def adjacent(self, i: int) -> set[int]:
        return self.parents(i) | self.children(i) | self.neighbors(i)

    def is_adjacent(self, i: int, j: int) -> bool:
        a, b = min(i, j), max(i, j)
        return (i, j) in self.directed or (j, i) in self.directed or (a, b) in self.undirected

    def linear_parents(self, i: int) -> set[int]:
        return {a for a in self.parents(i) if (a, i) not in self.nonlinear}

    def nonlinear_parents(self, i: int) -> set[int]:
        return {a for a in self.parents(i) if (a, i) in self.nonlinear}

    def skeleton(self) -> frozenset:
        return frozenset((min(i, j), max(i, j)) for i, j in self.directed) | self.undirected

    def undirected_pairs(self) -> list[tuple[int, int]]:
        return sorted(self.undirected)

    def non_adjacent_pairs(self) -> list[tuple[int, int]]:
        skel = self.skeleton()
        return [
            (i, j) for i in range(self.p) for j in range(i + 1, self.p) if (i, j) not in skel
        ]

    def creates_cycle(self, i: int, j: int) -> bool:
        return creates_cycle(self, i, j)

    def is_acyclic(self) -> bool:
        return directed_is_acyclic(self.p, self.directed)

    def is_dag(self) -> bool:
        return not self.undirected and self.is_acyclic()

    @property
    def n_edges(self) -> int:
        return len(self.directed) + len(self.undirected)

    def name(self, i: int) -> str:
        return self.names[i] if self.names is not None else f"X{i}"

    # -------------------------------------------------------------- construction

    def replace(self, **changes) -> "Pdag":
        kw = dict(
            p=self.p,
            directed=self.directed,
            undirected=self.undirected,
            nonlinear=self.nonlinear,
            names=self.names,
        )
        kw.update(changes)
        return Pdag(**kw)

    def with_names(self, names: Sequence[str]) -> "Pdag":
        return self.replace(names=tuple(names))

    def orient(self, i: int, j: int, nonlinear: bool = False) -> "Pdag":
        """Add ``i -> j``, replacing any undirected edge between the pair."""
        key = (min(i, j), max(i, j))
        if (j, i) in self.directed:
            raise GraphError(f"{j} -> {i} already present")
        nl = self.nonlinear | {(i, j)} if nonlinear else self.nonlinear
        return self.replace(
            directed=self.directed | {(i, j)},
            undirected=self.undirected - {key},
            nonlinear=nl,
        )

    def edges(self) -> list[tuple[int, int, str]]:
        """All edges as ``(i, j, mark)`` with mark ``'->'`` or ``'--'``."""
        out = [(i, j, "->") for i, j in self.directed]
        out += [(i, j, "--") for i, j in self.undirected]
        return sorted(out, key=lambda e: (min(e[0], e[1]), max(e[0], e[1])))

    def mark(self, i: int, j: int) -> Optional[str]:
        """Mark between ``i`` and ``j`` as seen from ``i``: '->', '<-', '--' or None."""
        if (i, j) in self.directed:
            return "->"
        if (j, i) in self.directed:
            return "<-"
        if (min(i, j), max(i, j)) in self.undirected:
            return "--"
        return None

    def adjacency_matrix(self) -> np.ndarray:
        """``A[i, j] = 1`` for ``i -> j``; undirected edges set both entries."""
        a = np.zeros((self.p, self.p), dtype=int)
        for i, j in self.directed:
            a[i, j] = 1
        for i, j in self.undirected:
            a[i, j] = a[j, i] = 1
        return a

    @classmethod
    def from_adjacency(cls, a: np.ndarray, names=None) -> "Pdag":
        a = np.asarray(a)
        p = a.shape[0]
        directed, undirected = set(), set()
        for i in range(p):
            for j in range(i + 1, p):
                if a[i, j] and a[j, i]:
                    undirected.add((i, j))
                elif a[i, j]:
                    directed.add((i, j))
                elif a[j, i]:
                    directed.add((j, i))
        return cls(p, frozenset(directed), frozenset(undirected), names=names)

    def __str__(self) -> str:
        return format_edgelist(self).strip()


def directed_is_acyclic(p: int, directed: Iterable[tuple[int, int]]) -> bool:
    """Kahn's topological sort over the directed edges."""
    indeg = [0] * p
    out: list[list[int]] = [[] for _ in range(p)]
    for i, j in directed:
        out[i].append(j)
        indeg[j] += 1
    stack = [v for v in range(p) if indeg[v] == 0]
    seen = 0
    while stack:
        v = stack.pop()
        seen += 1
        for w in out[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                stack.append(w)
    return seen == p


def reachable(p: int, directed: Iterable[tuple[int, int]], src: int, dst: int) -> bool:
    """Whether a directed path ``src ~> dst`` exists (``src == dst`` counts)."""
    out: list[list[int]] = [[] for _ in range(p)]
    for i, j in directed:
        out[i].append(j)
    stack, seen = [src], {src}
    while stack:
        v = stack.pop()
        if v == dst:
            return True
        for w in out[v]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return False


def creates_cycle(g: Pdag, i: int, j: int) -> bool:
    """True iff adding ``i -> j`` closes a directed cycle through directed edges only."""
    if i == j:
        raise GraphError("self-loop")
    return reachable(g.p, g.directed, j, i)


def parents(g: Pdag, i: int) -> set[int]:
    return g.parents(i)


def undirected_pairs(g: Pdag) -> list[tuple[int, int]]:
    return g.undirected_pairs()


# ---------------------------------------------------------------------------
# edge-list text format
#
#   # nodes: A B C        (optional; declares order and isolated nodes)
#   A -> B [nonlinear]
#   B -- C


def parse_edgelist(text: str, names: Optional[Sequence[str]] = None) -> Pdag:
    """Parse edge-list text.

    With ``names`` the node order is fixed and unknown names are an error.
    Without it, a ``# nodes:`` header fixes the order, else nodes are numbered
    in order of first appearance.
    """
    declared: Optional[list[str]] = list(names) if names is not None else None
    fixed = declared is not None
    order: list[str] = list(declared) if declared else []
    index = {s: k for k, s in enumerate(order)}
    directed, undirected, nonlinear = [], [], []
    seen_pairs: set[tuple[str, str]] = set()

    def node(s: str, lineno: int) -> int:
        if s not in index:
            if fixed:
                raise GraphError(f"line {lineno}: unknown node {s!r}")
            index[s] = len(order)
            order.append(s)
        return index[s]

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("#"):
            body = line[1:].strip()
            if body.lower().startswith("nodes:") and not fixed:
                for s in body[6:].split():
                    node(s, lineno)
            continue
        if "#" in line:
            line = line[: line.index("#")].strip()
        if not line:
            continue
        tag = False
        if line.endswith("]"):
            k = line.rfind("[")
            if k < 0 or line[k + 1 : -1].strip().lower() != "nonlinear":
                raise GraphError(f"line {lineno}: unknown tag in {raw!r}")
            tag = True
            line = line[:k].strip()
        for arrow, mark in (("->", "->"), ("--", "--"), ("<-", "<-")):
            if arrow in line:
                a, b = (s.strip() for s in line.split(arrow, 1))
                break
        else:
            raise GraphError(f"line {lineno}: cannot parse {raw!r}")
        if not a or not b or " " in a or " " in b:
            raise GraphError(f"line {lineno}: cannot parse {raw!r}")
        if mark == "<-":
            a, b, mark = b, a, "->"
        pair = (min(a, b), max(a, b))
        if pair in seen_pairs:
            raise GraphError(f"line {lineno}: duplicate edge between {a} and {b}")
        if a == b:
            raise GraphError(f"line {lineno}: self-loop on {a}")
        seen_pairs.add(pair)
        i, j = node(a, lineno), node(b, lineno)
        if mark == "->":
            directed.append((i, j))
            if tag:
                nonlinear.append((i, j))
        else:
            if tag:
                raise GraphError(f"line {lineno}: undirected edge cannot be nonlinear")
            undirected.append((i, j))
    return Pdag(len(order), frozenset(directed), frozenset(undirected),
                frozenset(nonlinear), names=tuple(order))


def format_edgelist(g: Pdag) -> str:
    names = [g.name(i) for i in range(g.p)]
    lines = ["# nodes: " + " ".join(names)]
    for i, j, mark in g.edges():
        tag = " [nonlinear]" if (i, j) in g.nonlinear else ""
        lines.append(f"{names[i]} {mark} {names[j]}{tag}")
    return "\n".join(lines) + "\n"


def read_edgelist(path: str | Path, names: Optional[Sequence[str]] = None) -> Pdag:
    return parse_edgelist(Path(path).read_text(), names)


def write_edgelist(g: Pdag, path: str | Path) -> None:
    Path(path).write_text(format_edgelist(g))


@dataclass(frozen=True)
class EdgeVerdict:
    """Outcome of the bivariate algorithm for one pair.

    ``kind`` is ``'none'``, ``'directed'`` (``source -> target``) or
    ``'undirected'``. ``test`` carries the direction test when one ran.
    """

    kind: str
    source: Optional[int] = None
    target: Optional[int] = None
    test: Optional[object] = None
    degenerate: bool = False
    screen_p: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("none", "directed", "undirected"):
            raise ValueError(f"bad verdict kind {self.kind!r}")
