"""Brute-force reference implementations used only by the tests.

Everything here works by exhaustive enumeration over plain edge sets and
does not import the graph operations it is used to check.
"""

from __future__ import annotations

import itertools

import networkx as nx
import numpy as np

from nicausal.data import Pdag


def is_acyclic(p, edges):
    g = nx.DiGraph()
    g.add_nodes_from(range(p))
    g.add_edges_from(edges)
    return nx.is_directed_acyclic_graph(g)


def unshielded_colliders(p, edges, extra_adjacent=()):
    """Colliders ``a -> c <- b`` over ``edges`` whose tails are non-adjacent;
    ``extra_adjacent`` adds pairs (e.g. undirected edges) that shield."""
    es = set(edges)
    adj = {frozenset(e) for e in es} | {frozenset(e) for e in extra_adjacent}
    out = set()
    for c in range(p):
        pa = sorted(a for a, b in es if b == c)
        for a, b in itertools.combinations(pa, 2):
            if frozenset((a, b)) not in adj:
                out.add((a, c, b))
    return frozenset(out)


def random_dag(rng, p, prob):
    """Random DAG: random node order, each forward pair an edge with ``prob``."""
    order = rng.permutation(p)
    edges = set()
    for a in range(p):
        for b in range(a + 1, p):
            if rng.random() < prob:
                edges.add((int(order[a]), int(order[b])))
    return Pdag(p, frozenset(edges))


def orientations(skeleton):
    skel = sorted(skeleton)
    for bits in itertools.product((0, 1), repeat=len(skel)):
        yield [(i, j) if b == 0 else (j, i) for (i, j), b in zip(skel, bits)]


def markov_class(dag: Pdag):
    """All DAGs with the same skeleton and v-structures as ``dag``."""
    target = unshielded_colliders(dag.p, dag.directed)
    out = []
    for edges in orientations(dag.skeleton()):
        if is_acyclic(dag.p, edges) and unshielded_colliders(dag.p, edges) == target:
            out.append(frozenset(edges))
    return out


def summarize(p, dags, names=None):
    """PDAG whose edge is directed iff every DAG in ``dags`` agrees on it."""
    first = dags[0]
    skel = {(min(i, j), max(i, j)) for i, j in first}
    directed, undirected = set(), set()
    for i, j in skel:
        ways = {(a, b) for d in dags for (a, b) in d if {a, b} == {i, j}}
        if len(ways) == 1:
            directed |= ways
        else:
            undirected.add((i, j))
    return Pdag(p, frozenset(directed), frozenset(undirected), names=names)


def brute_cpdag(dag: Pdag, fixed=()):
    fixed = set(fixed)
    members = [d for d in markov_class(dag) if fixed <= d]
    return summarize(dag.p, members), members


def consistent_extensions(g: Pdag):
    """DAGs keeping g's directed edges, acyclic, with no v-structures beyond g's."""
    base = unshielded_colliders(g.p, g.directed, g.undirected)
    out = []
    for und in orientations(g.undirected):
        edges = list(g.directed) + und
        if is_acyclic(g.p, edges) and unshielded_colliders(g.p, edges) == base:
            out.append(frozenset(edges))
    return out


def brute_maximal_orientation(g: Pdag):
    ext = consistent_extensions(g)
    return summarize(g.p, ext) if ext else None


def random_background_pdag(rng, p, prob, frac=0.4):
    """CPDAG of a random DAG with a random subset of its undirected edges
    oriented as in the DAG (consistent background knowledge)."""
    from nicausal.graphops import dag_to_cpdag

    dag = random_dag(rng, p, prob)
    cp = dag_to_cpdag(dag)
    bk = [e for e in sorted(dag.directed)
          if (min(e), max(e)) in cp.undirected and rng.random() < frac]
    g = cp
    for i, j in bk:
        g = g.orient(i, j)
    return dag, g


def d_separated(dag: Pdag, i, j, S):
    g = nx.DiGraph()
    g.add_nodes_from(range(dag.p))
    g.add_edges_from(dag.directed)
    return nx.is_d_separator(g, {i}, {j}, set(S))


def np_rng(seed):
    return np.random.default_rng(seed)
