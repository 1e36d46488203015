from __future__ import annotations

import numpy as np
import pytest

from nicausal.bivariate import TestConfig
from nicausal.data import Dataset, GraphError, Pdag
from nicausal.nncl import (
    NNCLReport,
    Pipeline,
    consensus,
    consensus_weights,
    filter_by_weights,
    nncl_orient,
    outside_search,
    residuals_for,
    segmented_ci,
)
from nicausal.pc import pc_learn
from nicausal.simulate import EdgeFunction, SemSpec, assign_nonlinear, builtin_graph, simulate
from nicausal.stats import RngStream

FAST = TestConfig(K=20_000)


def frame(*cols, names=None):
    names = names or tuple("XYZW"[: len(cols)])
    return Dataset(tuple(names), np.column_stack(cols))


def quad_pair(seed, n=1000, noise=0.5):
    gen = np.random.default_rng(seed)
    x = gen.standard_normal(n)
    e = gen.standard_normal(n)
    return x, x ** 2 + noise * e, e


class TestResiduals:
    def test_no_parents_centered(self):
        d = frame(np.array([1.0, 2.0, 6.0]), np.array([0.0, 1.0, 0.0]))
        np.testing.assert_allclose(residuals_for(0, Pdag(2), d), [-2, -1, 3])

    def test_exact_linear_parent(self):
        x = np.linspace(-1, 1, 50)
        d = frame(x, 3 * x - 2)
        g = Pdag(2, frozenset({(0, 1)}))
        assert np.max(np.abs(residuals_for(1, g, d))) < 1e-10

    def test_quadratic_parent_recovers_noise(self):
        x, y, e = quad_pair(1, noise=1.0)
        g = Pdag(2, frozenset({(0, 1)}), nonlinear=frozenset({(0, 1)}))
        r = residuals_for(1, g, frame(x, y))
        assert np.corrcoef(r, e)[0, 1] > 0.85
        assert abs(np.corrcoef(r, x ** 2)[0, 1]) < 0.2
        assert np.var(r) < 0.5 * np.var(y)

    @pytest.mark.xfail(strict=True, reason="two linear pieces leave the parabola's curvature "
                                           "in the residual (measured 0.12-0.18)")
    def test_quadratic_parent_residual_nearly_uncorrelated_with_square(self):
        x, y, _ = quad_pair(1, noise=1.0)
        g = Pdag(2, frozenset({(0, 1)}), nonlinear=frozenset({(0, 1)}))
        r = residuals_for(1, g, frame(x, y))
        assert abs(np.corrcoef(r, x ** 2)[0, 1]) < 0.1

    def test_supplied_fit_subtracted(self):
        x, y, _ = quad_pair(2)
        d = frame(x, y)
        g = Pdag(2, frozenset({(0, 1)}), nonlinear=frozenset({(0, 1)}))
        r = residuals_for(1, g, d, fits={(0, 1): x ** 2})
        np.testing.assert_allclose(r, (y - x ** 2) - (y - x ** 2).mean())


class TestSegmentedCI:
    def test_quadratic_both_halves_dependent(self):
        hits = 0
        for s in range(100):
            x, y, _ = quad_pair(100 + s)
            hits += segmented_ci(0, 1, Pdag(2), frame(x, y), 0.0, 0.01).dependent
        assert hits >= 95

    def test_independent(self):
        hits = 0
        for s in range(100):
            gen = np.random.default_rng(300 + s)
            hits += segmented_ci(0, 1, Pdag(2), frame(*gen.standard_normal((2, 1000))),
                                 0.0, 0.01).dependent
        assert hits <= 5

    def test_confounder_in_parents(self):
        gen = np.random.default_rng(5)
        z = gen.standard_normal(2000)
        x = z + 0.5 * gen.standard_normal(2000)
        y = 2 * z + 0.5 * gen.standard_normal(2000)
        d = frame(x, y, z)
        assert segmented_ci(0, 1, Pdag(3), d, 0.0, 0.01).dependent
        g = Pdag(3, frozenset({(2, 1), (2, 0)}))
        assert not segmented_ci(0, 1, g, d, 0.0, 0.01).dependent

    def test_too_small(self):
        x, y, _ = quad_pair(6, n=200)
        res = segmented_ci(0, 1, Pdag(2), frame(x, y), float(np.sort(x)[3]), 0.01)
        assert not res.dependent and res.too_small


class TestOrient:
    def test_quadratic_committed(self):
        x, y, _ = quad_pair(7)
        g0 = Pdag(2, frozenset(), frozenset({(0, 1)}), names=("X", "Y"))
        rep = NNCLReport()
        out = nncl_orient(frame(x, y), g0, cfg=FAST, report=rep)
        assert out.directed == {(0, 1)} and out.nonlinear == {(0, 1)}
        assert [(c.parent, c.child) for c in rep.commits] == [(0, 1)]
        assert list(rep.log) == [(0, 1, "nncl")]

    def test_nothing_undirected_unchanged(self):
        x, y, _ = quad_pair(8)
        g0 = Pdag(2, frozenset({(1, 0)}))
        assert nncl_orient(frame(x, y), g0, cfg=FAST) == g0

    def test_tiny_alpha_is_identity(self):
        x, y, _ = quad_pair(9)
        g0 = Pdag(2, frozenset(), frozenset({(0, 1)}))
        assert nncl_orient(frame(x, y), g0, alpha=1e-9, cfg=FAST) == g0

    def test_commit_runs_meek(self):
        # X -> Y quadratic, Y - Z linear: orienting X -> Y forces Y -> Z
        gen = np.random.default_rng(10)
        x = gen.standard_normal(1000)
        y = x ** 2 + 0.5 * gen.standard_normal(1000)
        z = y + gen.standard_normal(1000)
        g0 = Pdag(3, frozenset(), frozenset({(0, 1), (1, 2)}))
        rep = NNCLReport()
        out = nncl_orient(frame(x, y, z), g0, cfg=FAST, report=rep)
        assert out.directed == {(0, 1), (1, 2)} and out.nonlinear == {(0, 1)}
        assert (1, 2, 1) in list(rep.log)

    def test_rejects_bad_input(self):
        x, y, _ = quad_pair(11, n=200)
        with pytest.raises(GraphError):
            nncl_orient(frame(x, y), Pdag(3))
        with pytest.raises(ValueError):
            nncl_orient(frame(x, y), Pdag(2, frozenset(), frozenset({(0, 1)})), alpha=0.0)

    def test_monotone_and_acyclic_on_simulated_network(self):
        dag = builtin_graph("asia")
        for r in range(3):
            spec = assign_nonlinear(dag, 1.0, RngStream(50, r).child(0))
            d = simulate(spec, 1000, RngStream(50, r).child(1))
            g0 = pc_learn(d)
            out = nncl_orient(d, g0, cfg=FAST)
            assert g0.skeleton() == out.skeleton()
            assert g0.directed <= out.directed
            assert out.is_acyclic()

    def test_deterministic_and_thread_invariant(self):
        spec = assign_nonlinear(builtin_graph("asia"), 0.5, RngStream(60))
        d = simulate(spec, 800, RngStream(61))
        g0 = pc_learn(d)
        runs = []
        for workers in (1, 1, 3):
            rep = NNCLReport()
            g = nncl_orient(d, g0, cfg=FAST, rng=RngStream(4), report=rep, workers=workers)
            runs.append((g, list(rep.log), rep.to_json(g)))
        assert runs[0] == runs[1] == runs[2]


class TestOutside:
    def test_symmetric_quadratic_recovered(self):
        gen = np.random.default_rng(12)
        x = gen.uniform(-2, 2, 1000)
        y = x ** 2 + 0.5 * gen.standard_normal(1000)
        d = frame(x, y)
        g0 = pc_learn(d)
        assert g0.n_edges == 0
        out = outside_search(d, g0, cfg=FAST)
        assert out.directed == {(0, 1)} and out.nonlinear == {(0, 1)}

    def test_complete_graph_identity(self):
        x, y, _ = quad_pair(13, n=300)
        g = Pdag(2, frozenset(), frozenset({(0, 1)}))
        assert outside_search(frame(x, y), g, cfg=FAST) == g

    def test_independent_extra_variable(self):
        added = 0
        for s in range(20):
            gen = np.random.default_rng(400 + s)
            d = frame(*gen.standard_normal((3, 600)))
            added += outside_search(d, Pdag(3), cfg=FAST).n_edges
        # three pairs per run at alpha = 0.01
        assert added <= 3


class TestConsensus:
    def test_weights(self):
        g1 = Pdag(3, frozenset({(0, 1)}), frozenset({(1, 2)}))
        g2 = Pdag(3, frozenset({(1, 0)}))
        w = consensus_weights([g1, g2])
        assert w[0, 1] == 0.5 and w[1, 0] == 0.5
        assert w[1, 2] == 0.25 and w[2, 1] == 0.25
        assert np.all(np.diag(w) == 0) and np.all((w >= 0) & (w <= 1))

    def test_rule_arithmetic(self):
        point = Pdag(4, frozenset({(0, 1), (2, 3)}), frozenset({(1, 2)}))
        w = np.zeros((4, 4))
        w[0, 1] = 0.70                   # kept directed
        w[2, 3], w[3, 2] = 0.30, 0.35    # demoted to undirected
        w[1, 2], w[2, 1] = 0.25, 0.25    # undirected sum 0.5: deleted
        out = filter_by_weights(point, w, 0.6)
        assert out.directed == {(0, 1)} and out.undirected == {(2, 3)}
        w[2, 3], w[3, 2] = 0.30, 0.25
        assert filter_by_weights(point, w, 0.6).undirected == set()

    def test_threshold_boundary(self):
        point = Pdag(2, frozenset({(0, 1)}))
        w = np.array([[0.0, 0.6], [0.0, 0.0]])
        assert filter_by_weights(point, w, 0.6).directed == {(0, 1)}

    def test_identical_replicates(self):
        x, y, _ = quad_pair(14, n=200)
        fixed = Pdag(2, frozenset({(0, 1)}), names=("X", "Y"))
        res = consensus(frame(x, y), lambda d, rng: fixed, R=5)
        assert res.graph == fixed and res.replicates == 5 and res.dropped == 0

    def test_failed_replicates_dropped(self):
        x, y, _ = quad_pair(15, n=200)
        calls = []

        def flaky(d, rng):
            calls.append(1)
            if len(calls) % 2 == 0:
                raise ValueError("boom")
            return Pdag(2, frozenset({(0, 1)}))

        res = consensus(frame(x, y), flaky, R=4)
        assert res.replicates + res.dropped == 4 and res.dropped == 2

    def test_pipeline_consensus_deterministic(self):
        x, y, _ = quad_pair(16, n=500)
        pipe = Pipeline(test=FAST)
        a = consensus(frame(x, y), pipe, R=3, seed=2)
        b = consensus(frame(x, y), pipe, R=3, seed=2, workers=3)
        assert a.graph == b.graph and np.array_equal(a.weights, b.weights)

    def test_argument_checks(self):
        x, y, _ = quad_pair(17, n=100)
        with pytest.raises(ValueError):
            consensus(frame(x, y), lambda d, r: Pdag(2), R=1)
        with pytest.raises(ValueError):
            consensus(frame(x, y), lambda d, r: Pdag(2), R=3, threshold=0.0)


class TestPipeline:
    def test_directed_initial_graph_reduced(self):
        spec = SemSpec(builtin_graph("five"), {(0, 1): EdgeFunction("typeI", 1.0, 0.0)})
        d = simulate(spec, 300, RngStream(1))
        g = Pipeline(initial=spec.dag, outside=False).initial_graph(d)
        assert (0, 1) in g.directed and (1, 3) in g.directed
        assert g.nonlinear == {(0, 1)}
        # C -> E <- D is a v-structure, so only A - C stays undirected
        assert g.undirected == {(0, 2)}

    def test_empty_learner(self):
        x, y, _ = quad_pair(18, n=500)
        g = Pipeline(learner="none", test=FAST).run(frame(x, y), RngStream(0))
        assert g.directed == {(0, 1)}

    def test_validation(self):
        with pytest.raises(ValueError):
            Pipeline(learner="ges")
        with pytest.raises(ValueError):
            Pipeline(alpha=1.0)
