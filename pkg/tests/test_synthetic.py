import numpy as np
import pytest

from hgnn.errors import ValidationError
from hgnn.graph import write_edge_list
from hgnn.synthetic import ErdosRenyi, PlantedHierarchy, WeightSpec, two_cliques


def test_complete_erdos_renyi():
    g = ErdosRenyi(n=4, p=1.0).generate(0)
    assert g.num_edges == 12
    assert set(g.edges.values()) == {1.0}


def test_empty_erdos_renyi():
    assert ErdosRenyi(n=5, p=0.0).generate(0).num_edges == 0


def test_same_seed_same_bytes():
    spec = PlantedHierarchy(levels=2, branching=2, base_block_size=4, p_in=(0.9, 0.3), p_out=0.02,
                            weight=WeightSpec("exponential", mean=2.0))
    assert write_edge_list(spec.generate(5)) == write_edge_list(spec.generate(5))
    assert write_edge_list(spec.generate(5)) != write_edge_list(spec.generate(6))


def test_planted_shapes_and_nesting():
    spec = PlantedHierarchy(levels=2, branching=4, base_block_size=16, p_in=(0.9, 0.06), p_out=0.005)
    assert spec.n == 256
    c0, c1 = spec.planted_partitions()
    assert c0.shape == (256, 16) and c1.shape == (16, 4)
    np.testing.assert_array_equal(c1.labels()[c0.labels()], spec.block_labels(1))


def test_probability_matrix_levels():
    spec = PlantedHierarchy(levels=2, branching=2, base_block_size=2, p_in=(0.8, 0.4), p_out=0.1)
    p = spec.probability_matrix()
    assert p[0, 0] == 0.0
    assert p[0, 1] == 0.8
    assert p[0, 2] == 0.4
    assert p[0, 4] == 0.1


def test_block_density_ordering():
    spec = PlantedHierarchy(levels=2, branching=2, base_block_size=8, p_in=(0.9, 0.3), p_out=0.02)
    a = spec.generate(0).dense() > 0
    lab0, lab1 = spec.block_labels(0), spec.block_labels(1)
    same0 = lab0[:, None] == lab0[None, :]
    same1 = (lab1[:, None] == lab1[None, :]) & ~same0
    none = lab1[:, None] != lab1[None, :]
    np.fill_diagonal(same0, False)
    assert a[same0].mean() > a[same1].mean() > a[none].mean()


def test_poisson_flow_weights_are_counts():
    spec = PlantedHierarchy(levels=1, branching=2, base_block_size=5, p_in=(0.9,), p_out=0.1,
                            weight=WeightSpec("poisson_flow", mean=20))
    w = np.array(list(spec.generate(1).edges.values()))
    assert np.all(w >= 1) and np.all(w == np.round(w))


@pytest.mark.parametrize("kwargs", [
    {"p_in": (0.3, 0.9)}, {"p_in": (0.9,)}, {"p_out": 1.5}, {"levels": 0, "p_in": ()}, {"base_block_size": 0},
])
def test_invalid_planted(kwargs):
    with pytest.raises(ValidationError):
        PlantedHierarchy(**kwargs)


@pytest.mark.parametrize("kwargs", [{"kind": "gamma"}, {"kind": "poisson", "mean": 0.5}, {"kind": "exponential", "mean": 0}])
def test_invalid_weights(kwargs):
    with pytest.raises(ValidationError):
        WeightSpec(**kwargs)


def test_invalid_erdos_renyi():
    with pytest.raises(ValidationError):
        ErdosRenyi(n=0)
    with pytest.raises(ValidationError):
        ErdosRenyi(p=-0.1)


def test_two_cliques():
    g, labels = two_cliques()
    assert g.n == 8 and g.num_edges == 2 * 12 + 2
    np.testing.assert_array_equal(labels, [0] * 4 + [1] * 4)
