import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hgnn.community import best_labels, hardened, infer_nested_hierarchy, infer_partition_modularity
from hgnn.errors import ValidationError
from hgnn.graph import Graph
from hgnn.hierarchy import Partition, aggregate_graph
from hgnn.objectives import modularity
from hgnn.synthetic import PlantedHierarchy, two_cliques

from oracles import exhaustive_modularity, modularity_direct
from strategies import random_graph


def same_split(a, b) -> bool:
    """Equal as set partitions (labels may be permuted)."""
    a, b = np.asarray(a), np.asarray(b)
    return all((a[i] == a[j]) == (b[i] == b[j]) for i in range(a.size) for j in range(a.size))


def clique_pairs(w=0.2, bridge=0.25):
    """Four 4-cliques; cliques (0,1) and (2,3) joined densely with weight ``w``, pairs by one weak edge."""
    a = np.zeros((16, 16))
    for b in range(4):
        a[4 * b:4 * b + 4, 4 * b:4 * b + 4] = 1
    np.fill_diagonal(a, 0)
    for p in (0, 2):
        a[4 * p:4 * p + 4, 4 * p + 4:4 * p + 8] = w
        a[4 * p + 4:4 * p + 8, 4 * p:4 * p + 4] = w
    a[7, 8] = a[8, 7] = bridge
    return Graph.from_dense(a)


class TestModularitySearch:
    def test_two_cliques_planted_split(self):
        g, truth = two_cliques()
        c = infer_partition_modularity(g)
        assert same_split(c.labels(), truth)
        q_opt, _ = exhaustive_modularity(g.dense())
        assert float(modularity(g, c)) == pytest.approx(q_opt, abs=1e-12)

    def test_complete_graph_single_community(self):
        g = Graph.from_dense(np.ones((5, 5)) - np.eye(5))
        c = infer_partition_modularity(g)
        assert c.cols == 1
        assert float(modularity(g, c)) == 0.0

    def test_two_dyads(self):
        g = Graph.from_edges(4, [(0, 1, 1), (1, 0, 1), (2, 3, 1), (3, 2, 1)])
        c = infer_partition_modularity(g)
        assert same_split(c.labels(), [0, 0, 1, 1])
        assert float(modularity(g, c)) == 0.5

    def test_rejects_negative_weights(self):
        with pytest.raises(ValidationError):
            infer_partition_modularity(Graph.from_dense([[0, -1.0], [1.0, 0]]))

    def test_rejects_empty_graph(self):
        with pytest.raises(ValidationError):
            infer_partition_modularity(Graph.empty(3))

    def test_deterministic(self):
        g = random_graph(np.random.default_rng(9), 20, 0.2)
        a, qa = best_labels(g, seed=4)
        b, qb = best_labels(g, seed=4)
        np.testing.assert_array_equal(a, b)
        assert qa == qb

    def test_never_below_single_community(self):
        for seed in range(10):
            g = random_graph(np.random.default_rng(seed), 12, 0.3)
            assert float(modularity(g, infer_partition_modularity(g, seed=seed))) >= 0.0

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 7), st.floats(0.1, 1.0), st.integers(0, 2**32 - 1))
    def test_matches_exhaustive_search(self, n, density, seed):
        g = random_graph(np.random.default_rng(seed), n, density)
        if g.total_weight() == 0:
            return
        q_opt, _ = exhaustive_modularity(g.dense())
        labels, q = best_labels(g, seed=seed % 1000)
        assert q >= q_opt - 1e-9
        assert modularity_direct(g.dense(), labels) == pytest.approx(q, abs=1e-12)


class TestNestedHierarchy:
    def test_levels_one_equals_single_search(self):
        g, _ = two_cliques()
        (only,) = infer_nested_hierarchy(g, 1)
        np.testing.assert_array_equal(only.labels(), infer_partition_modularity(g).labels())

    def test_levels_zero_rejected(self):
        with pytest.raises(ValidationError):
            infer_nested_hierarchy(two_cliques()[0], 0)

    def test_single_clique_collapses_then_identities(self):
        g = Graph.from_dense(np.ones((5, 5)) - np.eye(5))
        parts = infer_nested_hierarchy(g, 3)
        assert [p.shape for p in parts] == [(5, 1), (1, 1), (1, 1)]

    def test_clique_pairs_nest_16_4_2(self):
        g = clique_pairs()
        parts = infer_nested_hierarchy(g, 2)
        assert [p.shape for p in parts] == [(16, 4), (4, 2)]
        assert same_split(parts[0].labels(), np.repeat(np.arange(4), 4))
        # level 2 is the exhaustive optimum on the inter-community network
        agg = aggregate_graph(g, parts[0]).dense()
        np.fill_diagonal(agg, 0.0)
        _, best = exhaustive_modularity(agg)
        assert same_split(parts[1].labels(), best)
        assert same_split(parts[1].labels(), [0, 0, 1, 1])

    @pytest.mark.parametrize("seed", range(6))
    def test_planted_hierarchy_recovered(self, seed):
        spec = PlantedHierarchy(levels=2, branching=2, base_block_size=4, p_in=(0.9, 0.3), p_out=0.02)
        g = spec.generate(seed)
        found = infer_partition_modularity(g).labels()
        base = spec.planted_partitions()[0]
        # never splits a planted base block
        for b in range(4):
            assert np.unique(found[base.labels() == b]).size == 1
        # and equals the exhaustive optimum over coarsenings of the planted blocks
        agg = aggregate_graph(g, base).dense()
        _, best = exhaustive_modularity(agg)
        assert same_split(found, best[base.labels()])

    def test_chain_dimensions(self):
        g = random_graph(np.random.default_rng(1), 30, 0.15)
        parts = infer_nested_hierarchy(g, 3)
        assert parts[0].rows == 30
        for lo, hi in zip(parts, parts[1:]):
            assert lo.cols == hi.rows


def test_hardened_lowest_index_tie_break():
    soft = np.array([[0.5, 0.5], [0.2, 0.8], [1 / 3, 1 / 3]])
    np.testing.assert_array_equal(hardened(soft), [0, 1, 0])
    np.testing.assert_array_equal(hardened(Partition.from_labels([1, 0]).matrix), [1, 0])
