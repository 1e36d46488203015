from __future__ import annotations

import numpy as np
import pytest
from scipy import stats as sps

from nicausal.data import Dataset, GraphError, Pdag
from nicausal.metrics import GraphScore, holdout_loglik, jaccard, score, shd, tp_fp
from nicausal.simulate import EdgeFunction, SemSpec, simulate
from nicausal.stats import RngStream

A, B, C = range(3)


def G(p, directed=(), undirected=(), nonlinear=()):
    return Pdag(p, frozenset(directed), frozenset(undirected), frozenset(nonlinear))


def random_pdag(gen, p):
    directed, undirected = set(), set()
    for i in range(p):
        for j in range(i + 1, p):
            m = gen.integers(4)
            if m == 1:
                directed.add((i, j))
            elif m == 2:
                directed.add((j, i))
            elif m == 3:
                undirected.add((i, j))
    return G(p, directed, undirected)


class TestExamples:
    def test_shd(self):
        g = G(3, [(A, B)], [(B, C)])
        assert shd(g, g) == 0
        assert shd(G(2), G(2, [(0, 1)])) == 1
        assert shd(g, G(3, [(A, B), (B, C), (A, C)])) == 2

    def test_jaccard(self):
        g = G(3, [(A, B), (B, C)])
        assert jaccard(g, g) == 1.0
        assert jaccard(G(3, [(A, B)]), G(3, [(B, C)])) == 0.0
        assert jaccard(g, G(3, [(A, B)], [(B, C)])) == 0.5
        assert jaccard(G(3), G(3)) == 1.0

    def test_tp_fp(self):
        truth = G(3, [(A, B), (B, C)])
        assert tp_fp(truth, truth) == (2, 0)
        assert tp_fp(G(3), truth) == (0, 0)
        assert tp_fp(G(2, [(A, B)]), G(2, [(B, A)])) == (0, 0)
        assert tp_fp(G(3, [(A, C)]), truth) == (0, 1)

    def test_score(self):
        s = score(G(3, [(A, B)]), G(3, [(A, B), (B, C)]))
        assert s == GraphScore(1, 0.5, 1, 0)
        assert s.to_json() == {"shd": 1, "ji": 0.5, "tp": 1, "fp": 0}

    def test_node_count_mismatch(self):
        for f in (shd, jaccard, tp_fp):
            with pytest.raises(GraphError):
                f(G(2), G(3))


class TestProperties:
    def test_metric_suite(self):
        gen = np.random.default_rng(71)
        for _ in range(1000):
            p = int(gen.integers(2, 6))
            g1, g2, g3 = (random_pdag(gen, p) for _ in range(3))
            d12 = shd(g1, g2)
            assert d12 == shd(g2, g1)
            assert (d12 == 0) == (g1 == g2)
            assert shd(g1, g3) <= d12 + shd(g2, g3)
            j = jaccard(g1, g2)
            assert j == jaccard(g2, g1) and 0.0 <= j <= 1.0
            assert (j == 1.0) == (d12 == 0)
            union = g1.skeleton() | g2.skeleton()
            assert d12 <= len(union)

    def test_tp_fp_partition(self):
        gen = np.random.default_rng(72)
        for _ in range(200):
            est, truth = random_pdag(gen, 5), random_pdag(gen, 5)
            tp, fp = tp_fp(est, truth)
            wrong_mark = sum(1 for e in est.skeleton() if e in truth.skeleton()) - tp
            assert tp + fp + wrong_mark == est.n_edges


class TestHoldout:
    def test_empty_graph_is_marginal_model(self):
        gen = np.random.default_rng(73)
        tr = Dataset(("a", "b"), gen.standard_normal((500, 2)))
        te = Dataset(("a", "b"), gen.standard_normal((200, 2)))
        expect = sum(
            sps.norm.logpdf(te.values[:, k], tr.values[:, k].mean(), tr.values[:, k].std()).sum()
            for k in range(2))
        assert holdout_loglik(G(2), tr, te) == pytest.approx(expect, rel=1e-10)
        # and close to the standard-normal density of the test data
        assert holdout_loglik(G(2), tr, te) == pytest.approx(sps.norm.logpdf(te.values).sum(), rel=0.02)

    def test_quadratic_term(self):
        gen = np.random.default_rng(74)
        x = gen.standard_normal(700)
        y = 1 + 2 * x - x ** 2 + 0.3 * gen.standard_normal(700)
        d = Dataset(("x", "y"), np.column_stack([x, y]))
        tr, te = d.take(np.arange(500)), d.take(np.arange(500, 700))
        nl = holdout_loglik(G(2, [(0, 1)], nonlinear=[(0, 1)]), tr, te)
        lin = holdout_loglik(G(2, [(0, 1)]), tr, te)
        A = np.column_stack([np.ones(500), x[:500], x[:500] ** 2])
        coef = np.linalg.lstsq(A, y[:500], rcond=None)[0]
        sd = np.sqrt(np.mean((y[:500] - A @ coef) ** 2))
        pred = coef[0] + coef[1] * x[500:] + coef[2] * x[500:] ** 2
        expect = sps.norm.logpdf(y[500:], pred, sd).sum() + \
            sps.norm.logpdf(x[500:], x[:500].mean(), x[:500].std()).sum()
        assert nl == pytest.approx(expect, rel=1e-10)
        assert nl > lin

    def test_true_graph_beats_deleted_edge(self):
        spec = SemSpec(G(3, [(A, B), (B, C)]))
        wins = 0
        for r in range(10):
            d = simulate(spec, 600, RngStream(75, r))
            tr, te = d.take(np.arange(400)), d.take(np.arange(400, 600))
            wins += holdout_loglik(spec.dag, tr, te) >= holdout_loglik(G(3, [(A, B)]), tr, te)
        assert wins >= 9

    def test_variance_floor(self):
        x = np.linspace(-1, 1, 50)
        d = Dataset(("x", "y"), np.column_stack([x, 2 * x]))
        assert np.isfinite(holdout_loglik(G(2, [(0, 1)]), d, d))

    def test_errors(self):
        d = Dataset(("x", "y"), np.random.default_rng(0).standard_normal((20, 2)))
        e = Dataset(("x", "z"), d.values)
        with pytest.raises(ValueError):
            holdout_loglik(G(2), d, e)
        with pytest.raises(GraphError):
            holdout_loglik(G(3), d, d)
        square = G(4, undirected=[(0, 1), (1, 2), (2, 3), (0, 3)])
        d4 = Dataset(tuple("abcd"), np.random.default_rng(0).standard_normal((20, 4)))
        with pytest.raises(GraphError):
            holdout_loglik(square, d4, d4)

    def test_nonlinear_edge_function_is_used(self):
        spec = SemSpec(G(2, [(0, 1)]), {(0, 1): EdgeFunction("typeI", 1.5, 0.5)})
        d = simulate(spec, 800, RngStream(76))
        tr, te = d.take(np.arange(600)), d.take(np.arange(600, 800))
        assert holdout_loglik(spec.dag, tr, te) > holdout_loglik(G(2, [(0, 1)]), tr, te)
