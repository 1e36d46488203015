"""Synthetic data from DAG-structured additive SEMs with mixed linear and
nonlinear edges, plus the matching ground-truth restricted CPDAGs."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .data import Dataset, GraphError, Pdag
from .graphops import dag_to_cpdag
from .stats import RngStream

__all__ = [
    "FAMILIES",
    "EdgeFunction",
    "SemSpec",
    "BUILTIN_GRAPHS",
    "builtin_graph",
    "random_dag",
    "assign_nonlinear",
    "simulate",
    "ground_truth",
    "is_monotone_on",
]

FAMILIES = ("linear", "typeI", "typeII", "typeIII", "typeIV")
PARAM_RANGE = (0.3, 4.0)


@dataclass(frozen=True)
class EdgeFunction:
    """One additive term ``f(parent)`` of a child's structural equation.

    * linear:  s0*a*x
    * typeI:   s0*a*x^2 + s1*b*x
    * typeII:  s0*cos(a*x)
    * typeIII: s0*a*x^3 + s1*b*x^2
    * typeIV:  s0*tanh(x) + s1*cos(a*x) + s2*x^2
    """

    family: str
    a: float = 1.0
    b: float = 0.0
    signs: tuple[int, int, int] = (1, 1, 1)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        object.__setattr__(self, "signs", tuple(int(s) for s in self.signs))

    @property
    def nonlinear(self) -> bool:
        return self.family != "linear"

    def __call__(self, x: np.ndarray) -> np.ndarray:
        s0, s1, s2 = self.signs
        a, b = self.a, self.b
        if self.family == "linear":
            return s0 * a * x
        if self.family == "typeI":
            return s0 * a * x**2 + s1 * b * x
        if self.family == "typeII":
            return s0 * np.cos(a * x)
        if self.family == "typeIII":
            return s0 * a * x**3 + s1 * b * x**2
        return s0 * np.tanh(x) + s1 * np.cos(a * x) + s2 * x**2

    @classmethod
    def sample(cls, family: str, gen: np.random.Generator) -> "EdgeFunction":
        a, b = gen.uniform(*PARAM_RANGE, size=2)
        signs = tuple(int(s) for s in gen.choice([-1, 1], size=3))
        if family in ("linear", "typeII"):
            b = 0.0
        return cls(family, float(a), float(b), signs)


@dataclass(frozen=True)
class SemSpec:
    dag: Pdag
    functions: dict = field(default_factory=dict)  # (i, j) -> EdgeFunction
    noise_sd: tuple[float, ...] = ()

    def __post_init__(self):
        if self.dag.undirected or not self.dag.is_acyclic():
            raise GraphError("SEM graph must be a DAG")
        fns = {(int(i), int(j)): f for (i, j), f in self.functions.items()}
        for e in self.dag.directed:
            fns.setdefault(e, EdgeFunction("linear"))
        if set(fns) != set(self.dag.directed):
            raise GraphError("edge functions must match the DAG's edges")
        object.__setattr__(self, "functions", fns)
        sd = tuple(self.noise_sd) or (1.0,) * self.dag.p
        if len(sd) != self.dag.p or any(s <= 0 for s in sd):
            raise ValueError("need one positive noise sd per node")
        object.__setattr__(self, "noise_sd", tuple(float(s) for s in sd))
        nl = frozenset(e for e, f in fns.items() if f.nonlinear)
        if nl != self.dag.nonlinear:
            object.__setattr__(self, "dag", self.dag.replace(nonlinear=nl))

    @property
    def nonlinear_edges(self) -> list[tuple[int, int]]:
        return sorted(self.dag.nonlinear)

    def to_json(self) -> dict:
        names = [self.dag.name(i) for i in range(self.dag.p)]
        return {
            "nodes": names,
            "noise_sd": list(self.noise_sd),
            "edges": [
                {"from": names[i], "to": names[j], **asdict(self.functions[(i, j)])}
                for i, j in sorted(self.dag.directed)
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SemSpec":
        names = list(obj["nodes"])
        idx = {s: k for k, s in enumerate(names)}
        fns = {}
        for e in obj["edges"]:
            fns[(idx[e["from"]], idx[e["to"]])] = EdgeFunction(
                e["family"], e["a"], e["b"], tuple(e["signs"]))
        dag = Pdag(len(names), frozenset(fns), names=tuple(names))
        return cls(dag, fns, tuple(obj.get("noise_sd", ())))

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


def _graph(names: Sequence[str], edges: Sequence[tuple[str, str]]) -> Pdag:
    idx = {s: k for k, s in enumerate(names)}
    return Pdag(len(names), frozenset((idx[a], idx[b]) for a, b in edges), names=tuple(names))


BUILTIN_GRAPHS = {
    "asia": (
        ("asia", "tub", "smoke", "lung", "bronc", "either", "xray", "dysp"),
        (("asia", "tub"), ("smoke", "lung"), ("smoke", "bronc"), ("tub", "either"),
         ("lung", "either"), ("either", "xray"), ("either", "dysp"), ("bronc", "dysp")),
    ),
    "chain3": (("A", "B", "C"), (("A", "B"), ("B", "C"))),
    "collider3": (("A", "B", "C"), (("A", "C"), ("B", "C"))),
    # a four-DAG equivalence class; fixing A -> B compels B -> D
    "five": (("A", "B", "C", "D", "E"),
             (("A", "B"), ("B", "D"), ("A", "C"), ("C", "E"), ("D", "E"))),
}


def builtin_graph(name: str) -> Pdag:
    try:
        names, edges = BUILTIN_GRAPHS[name]
    except KeyError:
        raise KeyError(f"unknown graph {name!r}; choose from {sorted(BUILTIN_GRAPHS)}") from None
    return _graph(names, edges)


def random_dag(p: int, n_edges: int, rng: RngStream) -> Pdag:
    """Uniformly chosen edge set of the given size over a random node order."""
    gen = rng.generator()
    order = gen.permutation(p)
    pairs = [(int(order[a]), int(order[b])) for a in range(p) for b in range(a + 1, p)]
    if n_edges > len(pairs):
        raise ValueError("too many edges for p nodes")
    pick = gen.choice(len(pairs), size=n_edges, replace=False)
    return Pdag(p, frozenset(pairs[k] for k in sorted(pick)))


def assign_nonlinear(dag: Pdag, fraction: float, rng: RngStream,
                     families: Sequence[str] = ("typeI",)) -> SemSpec:
    """Flag ``round(fraction * |E|)`` edges (halves round up) as nonlinear.

    Nonlinear edges draw their family uniformly from ``families``; every edge
    draws ``a, b ~ Unif(0.3, 4)`` and independent random signs.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    if any(f not in FAMILIES or f == "linear" for f in families):
        raise ValueError(f"nonlinear families must come from {FAMILIES[1:]}")
    gen = rng.generator()
    edges = sorted(dag.directed)
    k = int(math.floor(fraction * len(edges) + 0.5))
    chosen = set(int(c) for c in gen.choice(len(edges), size=k, replace=False)) if k else set()
    fns = {}
    for idx, e in enumerate(edges):
        if idx in chosen:
            fam = families[int(gen.integers(len(families)))]
        else:
            fam = "linear"
        fns[e] = EdgeFunction.sample(fam, gen)
    return SemSpec(dag.replace(nonlinear=frozenset()), fns)


def _topological(dag: Pdag) -> list[int]:
    indeg = [len(dag.parents(v)) for v in range(dag.p)]
    ready = sorted(v for v in range(dag.p) if indeg[v] == 0)
    out = []
    while ready:
        v = ready.pop(0)
        out.append(v)
        for w in sorted(dag.children(v)):
            indeg[w] -= 1
            if indeg[w] == 0:
                ready.append(w)
        ready.sort()
    return out


def simulate(spec: SemSpec, n: int, rng: RngStream,
             names: Optional[Sequence[str]] = None) -> Dataset:
    """Draw ``n`` samples in topological order: each node is the sum of its
    parent terms plus Gaussian noise with the node's sd."""
    if n < 1:
        raise ValueError("n must be positive")
    dag = spec.dag
    gen = rng.generator()
    noise = gen.standard_normal((n, dag.p)) * np.asarray(spec.noise_sd)
    X = np.zeros((n, dag.p))
    for v in _topological(dag):
        acc = noise[:, v].copy()
        for u in sorted(dag.parents(v)):
            acc += spec.functions[(u, v)](X[:, u])
        X[:, v] = acc
    if names is None:
        names = [dag.name(i) for i in range(dag.p)]
    return Dataset(tuple(names), X)


def is_monotone_on(f: EdgeFunction, lo: float, hi: float, points: int = 4001) -> bool:
    if hi <= lo:
        return True
    y = f(np.linspace(lo, hi, points))
    d = np.diff(y)
    tol = 1e-12 * max(1.0, float(np.max(np.abs(y))))
    return not (np.any(d > tol) and np.any(d < -tol))


def ground_truth(spec: SemSpec, data: Optional[Dataset] = None) -> Pdag:
    """Restricted CPDAG with the non-invertible nonlinear edges held fixed.

    With ``data`` an edge counts as non-invertible only if its function is
    non-monotone over the observed range of its parent; without data every
    nonlinear edge is fixed.
    """
    fixed = set()
    for e in spec.nonlinear_edges:
        if data is None:
            fixed.add(e)
            continue
        col = data.values[:, e[0]]
        if not is_monotone_on(spec.functions[e], float(col.min()), float(col.max())):
            fixed.add(e)
    truth = dag_to_cpdag(spec.dag.replace(nonlinear=frozenset()), fixed)
    return truth.replace(nonlinear=frozenset(fixed) & truth.directed)
