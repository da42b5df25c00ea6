import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from limited_advice.sumtree import REBUILD_EVERY, WeightTree
from limited_advice.validation import naive_sample


def naive_probs(weights):
    w = np.asarray(weights, dtype=float)
    return w / w.sum()


class TestBuild:
    def test_uniform(self):
        assert WeightTree.build([1, 1, 1, 1]).total == 4.0

    def test_padding(self):
        tree = WeightTree.build([2, 1, 1])
        assert tree.capacity == 4
        assert tree.nodes[tree.capacity + 3] == 0.0
        assert tree.total == 4.0
        assert tree.check_invariants()

    def test_singleton(self):
        tree = WeightTree.build([5.0])
        assert tree.total == 5.0
        assert tree.capacity == 1
        assert all(tree.sample(u) == 0 for u in np.linspace(0, 0.999, 50))

    @pytest.mark.parametrize("w", [[], [0.0, 0.0], [1.0, -1.0], [1.0, np.inf], [[1.0, 2.0]]])
    def test_invalid(self, w):
        with pytest.raises(ValueError):
            WeightTree.build(w)

    def test_weights_view_is_read_only(self):
        tree = WeightTree.build([1.0, 2.0, 3.0])
        np.testing.assert_array_equal(tree.weights, [1.0, 2.0, 3.0])
        with pytest.raises(ValueError):
            tree.weights[0] = 9.0


class TestMultiply:
    def test_examples(self):
        tree = WeightTree.build([1, 1, 1, 1]).multiply_leaf(0, 3.0)
        assert tree.total == 6.0
        assert tree.prob(0) == 0.5

    def test_identity(self):
        tree = WeightTree.build([0.3, 1.7, 2.0])
        before = tree.nodes.copy()
        tree.multiply_leaf(1, 1.0)
        np.testing.assert_array_equal(tree.nodes, before)

    def test_prob_example(self):
        assert WeightTree.build([3, 1]).prob(0) == 0.75

    @pytest.mark.parametrize("i,factor,exc", [(-1, 2.0, IndexError), (3, 2.0, IndexError),
                                              (0, 0.0, ValueError), (0, -1.0, ValueError),
                                              (0, np.nan, ValueError), (0, np.inf, ValueError)])
    def test_errors(self, i, factor, exc):
        tree = WeightTree.build([1, 1, 1])
        with pytest.raises(exc):
            tree.multiply_leaf(i, factor)

    @pytest.mark.parametrize("K", [1, 2, 3, 5, 8, 1000])
    def test_cost_bound(self, K):
        tree = WeightTree.build(np.ones(K))
        bound = 2 * (tree.depth + 1)
        for i in range(0, K, max(1, K // 7)):
            tree.multiply_leaf(i, 1.5)
            assert tree.last_visits <= bound
        for u in np.linspace(0, 0.999, 17):
            tree.sample(u)
            assert tree.last_visits <= bound


class TestSample:
    def test_examples(self):
        assert WeightTree.build([1, 1, 1, 1]).sample(0.6) == 2
        tree = WeightTree.build([3, 1])
        assert tree.sample(0.5) == 0
        assert tree.sample(0.8) == 1

    def test_boundary_goes_right(self):
        # Z = 0.75 * 4 = 3 equals the left sum, so the descent goes right
        assert WeightTree.build([3, 1]).sample(0.75) == 1

    @pytest.mark.parametrize("u", [-0.1, 1.0, 1.5])
    def test_u_domain(self, u):
        with pytest.raises(ValueError):
            WeightTree.build([1, 1]).sample(u)

    def test_prob_examples(self):
        tree = WeightTree.build(np.ones(5))
        assert all(tree.prob(i) == pytest.approx(0.2) for i in range(5))
        assert WeightTree.build([1, 0]).prob(1) == 0.0
        assert WeightTree.build([2, 1, 1]).prob(0) == 0.5
        with pytest.raises(IndexError):
            WeightTree.build([1, 1]).prob(2)

    def test_zero_leaves_never_sampled(self):
        w = np.array([0.0, 1.0, 0.0, 0.0, 2.0, 0.0, 0.0])
        tree = WeightTree.build(w)
        for u in np.linspace(0, 1, 10_001)[:-1]:
            assert w[tree.sample(u)] > 0
        assert w[tree.sample(np.nextafter(1.0, 0.0))] > 0

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(0.0, 100.0), min_size=1, max_size=40).filter(lambda w: sum(w) > 1e-3),
           st.lists(st.tuples(st.integers(0, 39), st.floats(0.01, 100.0)), max_size=60))
    def test_matches_naive(self, weights, updates):
        tree = WeightTree.build(weights)
        naive = np.array(weights, dtype=float)
        for i, f in updates:
            i %= len(weights)
            tree.multiply_leaf(i, f)
            naive[i] *= f
        np.testing.assert_allclose(tree.probabilities(), naive_probs(naive), rtol=1e-9, atol=0)
        for u in np.linspace(0.0, 1.0, 201)[:-1]:
            assert tree.sample(u) == naive_sample(naive, u)
        assert tree.check_invariants()


class TestRebuild:
    def test_fresh_tree_no_op_without_rescale(self):
        tree = WeightTree.build([0.5, 1.5, 3.0])
        before = tree.nodes.copy()
        tree.rebuild(rescale=False)
        np.testing.assert_array_equal(tree.nodes, before)

    def test_rescale_preserves_probabilities(self):
        tree = WeightTree.build([0.5, 1.5, 3.0, 7.0, 0.25])
        before = tree.probabilities().copy()
        tree.rebuild()
        assert tree.total == pytest.approx(1.0, abs=1e-15)
        np.testing.assert_allclose(tree.probabilities(), before, rtol=0, atol=1e-15)

    def test_exact_after_many_updates(self):
        rng = np.random.default_rng(0)
        tree = WeightTree.build(np.ones(64))
        for i, f in zip(rng.integers(0, 64, 200_000), np.exp(rng.normal(0, 0.3, 200_000))):
            tree.multiply_leaf(int(i), float(f))
        tree.rebuild(rescale=False)
        cap, n = tree.capacity, tree.nodes
        np.testing.assert_array_equal(n[1:cap], n[2:2 * cap:2] + n[3:2 * cap:2])

    def test_periodic_rebuild(self):
        tree = WeightTree.build(np.ones(4))
        for _ in range(REBUILD_EVERY - 1):
            tree.multiply_leaf(0, 1.0)
        assert tree.rounds_since_rebuild == REBUILD_EVERY - 1
        tree.multiply_leaf(0, 1.0)
        assert tree.rounds_since_rebuild == 0
        assert tree.total == pytest.approx(1.0)

    def test_root_range_triggers_rescale(self):
        tree = WeightTree.build([1.0, 1.0])
        for _ in range(10):
            tree.multiply_leaf(0, 1e10)
            tree.multiply_leaf(1, 1e10)
            assert 2.0**-64 <= tree.total <= 2.0**64
        assert tree.prob(0) == pytest.approx(0.5)
