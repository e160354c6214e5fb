import itertools
import time

import numpy as np
import pytest

from graphvos import mrf
from graphvos.errors import InvalidLabel, NotTrained


def random_problem(rng, v, labels, p_edge=0.4):
    unary = -np.log(np.clip(rng.random((v, labels)), 1e-7, None))
    pairs = [(i, j) for i in range(v) for j in range(i + 1, v)
             if rng.random() < p_edge]
    if not pairs:
        pairs = [(0, min(1, v - 1))]
    pairs = np.array(pairs, dtype=np.int64)
    return mrf.MrfProblem(unary=unary, pairs=pairs,
                          weights=rng.random(len(pairs)),
                          lam=float(rng.random() * 2), num_labels=labels)


def brute_force_minimum(problem):
    v = len(problem.unary)
    best = np.inf
    for combo in itertools.product(range(problem.num_labels), repeat=v):
        best = min(best, mrf.energy(problem, np.array(combo)))
    return best


class TestEnergy:
    def test_uniform_labeling_unary_only(self):
        rng = np.random.default_rng(0)
        p = random_problem(rng, 5, 3)
        labeling = np.full(5, 2)
        assert mrf.energy(p, labeling) == pytest.approx(p.unary[:, 2].sum())

    def test_two_node_hand_arithmetic(self):
        unary = np.array([[1.0, 2.0], [3.0, 0.5]])
        p = mrf.MrfProblem(unary=unary, pairs=np.array([[0, 1]]),
                           weights=np.array([0.7]), lam=2.0, num_labels=2)
        assert mrf.energy(p, np.array([0, 1])) == pytest.approx(1.0 + 0.5 + 2.0 * 0.7)
        assert mrf.energy(p, np.array([1, 1])) == pytest.approx(2.0 + 0.5)

    def test_lambda_zero(self):
        rng = np.random.default_rng(1)
        p = random_problem(rng, 6, 3)
        p.lam = 0.0
        lab = rng.integers(0, 3, size=6)
        assert mrf.energy(p, lab) == pytest.approx(
            p.unary[np.arange(6), lab].sum())

    def test_invalid_label(self):
        rng = np.random.default_rng(2)
        p = random_problem(rng, 3, 2)
        with pytest.raises(InvalidLabel):
            mrf.energy(p, np.array([0, 1, 5]))


class TestSolve:
    def test_lambda_zero_gives_unary_argmin(self):
        rng = np.random.default_rng(3)
        p = random_problem(rng, 8, 4)
        p.lam = 0.0
        assert np.array_equal(mrf.solve(p), p.unary.argmin(axis=1))

    def test_binary_exact_100_instances(self):
        rng = np.random.default_rng(7)
        t0 = time.perf_counter()
        for _ in range(100):
            v = int(rng.integers(2, 13))
            p = random_problem(rng, v, 2)
            e = mrf.energy(p, mrf.solve(p))
            assert e == pytest.approx(brute_force_minimum(p), abs=1e-9)
        assert time.perf_counter() - t0 < 30.0

    def test_multilabel_bound_and_descent(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            v = int(rng.integers(2, 11))
            p = random_problem(rng, v, 3)
            labels = mrf.solve(p)
            e = mrf.energy(p, labels)
            init = mrf.energy(p, p.unary.argmin(axis=1))
            assert e <= 2.0 * brute_force_minimum(p) + 1e-9
            assert e <= init + 1e-12


class TestBuildProblem:
    def _graph(self):
        from conftest import toy_graph
        return toy_graph(4, [(0, 1), (1, 0), (1, 2), (2, 1), (2, 3), (3, 2)],
                         kinds=[0, 0, 1, 1, 0, 0])

    def test_untrained_raises(self):
        g = self._graph()
        with pytest.raises(NotTrained):
            mrf.build_problem(g, None, np.ones(4), np.zeros((4, 3)), lam=1.0)

    def test_causal_overlap_fraction(self):
        g = self._graph()
        g.causal_overlap = np.where(g.kind == 1, 50, 0).astype(np.int64)
        sizes = np.array([100, 50, 120, 80])
        probs = np.full((4, 2), 0.5)
        p = mrf.build_problem(g, probs, sizes, np.zeros((4, 3)), lam=1.0)
        causal_rows = p.pairs[[i for i in range(len(p.pairs))
                               if {tuple(p.pairs[i])} == {(1, 2)}]]
        # causal pair (1,2): overlap 50, min size 50 -> weight 1.0
        idx = [i for i in range(len(p.pairs)) if tuple(p.pairs[i]) == (1, 2)][0]
        assert p.weights[idx] == pytest.approx(1.0)

    def test_half_overlap(self):
        g = self._graph()
        g.causal_overlap = np.where(g.kind == 1, 25, 0).astype(np.int64)
        sizes = np.array([100, 50, 120, 80])
        probs = np.full((4, 2), 0.5)
        p = mrf.build_problem(g, probs, sizes, np.zeros((4, 3)), lam=1.0)
        idx = [i for i in range(len(p.pairs)) if tuple(p.pairs[i]) == (1, 2)][0]
        assert p.weights[idx] == pytest.approx(0.5)

    def test_spatial_weight_formula(self):
        g = self._graph()
        mean_lab = np.array([[0, 0, 0], [10, 0, 0], [10, 0, 0], [10, 0, 0]],
                            dtype=float)
        p = mrf.build_problem(g, np.full((4, 2), 0.5), np.ones(4), mean_lab,
                              lam=1.0, kappa=0.25, sigma_c=10.0)
        idx = [i for i in range(len(p.pairs)) if tuple(p.pairs[i]) == (0, 1)][0]
        assert p.weights[idx] == pytest.approx(0.25 * np.exp(-1.0))

    def test_unaries_are_neg_log(self):
        g = self._graph()
        probs = np.array([[0.9, 0.1]] * 4)
        p = mrf.build_problem(g, probs, np.ones(4), np.zeros((4, 3)), lam=0.5)
        assert p.unary[0, 0] == pytest.approx(-np.log(0.9))
        assert np.isfinite(p.unary).all()
