import json

import numpy as np
import pytest

from hgnn.embedding import AssemblyRule, svd_embedding
from hgnn.errors import ParseError, ValidationError
from hgnn.graph import Graph
from hgnn.hierarchy import Partition, build_layer_stack
from hgnn.io import (
    config_hash,
    dumps,
    embedding_from_tsv,
    embedding_to_tsv,
    features_to_json,
    features_to_tsv,
    params_from_json,
    params_to_json,
    partition_from_json,
    partition_to_json,
    read_checkpoint,
    read_partition,
    read_stack,
    reindex,
    write_checkpoint,
    write_partition,
    write_stack,
)
from hgnn.objectives import EdgeModel
from hgnn.propagation import ActivationParams, FeatureState, OutputHead
from hgnn.training import ModelParams

from strategies import random_graph


def labelled_graph(seed=0, n=6):
    g = random_graph(np.random.default_rng(seed), n)
    return Graph(tuple(f"n{i}" for i in range(n)), g.adjacency, True)


class TestJson:
    def test_dumps_is_stable_and_plain(self):
        obj = {"b": np.float64(0.1), "a": np.arange(3), "e": EdgeModel().kind}
        text = dumps(obj)
        assert text == dumps(obj)
        assert json.loads(text) == {"b": 0.1, "a": [0, 1, 2], "e": "gaussian_fixed_sigma"}

    def test_nan_rejected(self):
        with pytest.raises(ValueError):
            dumps({"x": float("nan")})

    def test_config_hash_ignores_key_order(self):
        assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
        assert config_hash({"a": 1}) != config_hash({"a": 2})
        assert len(config_hash({})) == 16


class TestPartitions:
    def test_roundtrip_probabilistic(self, tmp_path):
        c = Partition.from_dense([[0.25, 0.75], [1.0, 0.0], [0.5, 0.5]], groups=["x", "y"])
        write_partition(tmp_path / "p.json", c, ["a", "b", "c"])
        back = read_partition(tmp_path / "p.json")
        np.testing.assert_array_equal(back.dense(), c.dense())
        assert back.groups == ("x", "y") and back.kind == c.kind

    def test_short_form_and_reordering(self):
        c, order = partition_from_json({"a": "g1", "b": "g2", "c": "g1"}, nodes=["c", "b", "a"])
        assert order == ["c", "b", "a"]
        np.testing.assert_array_equal(c.labels(), [0, 1, 0])
        assert c.groups == ("g1", "g2")

    def test_missing_node(self):
        with pytest.raises(ParseError):
            partition_from_json({"a": "g"}, nodes=["a", "z"])

    def test_bad_shapes(self):
        with pytest.raises(ParseError):
            partition_from_json([1, 2])
        with pytest.raises(ParseError):
            partition_from_json({"nodes": ["a"], "assignments": []})

    def test_full_form_fields(self):
        obj = partition_to_json(Partition.from_labels([0, 1]), ["a", "b"])
        assert set(obj) == {"kind", "nodes", "groups", "assignments"}


class TestStack:
    def test_roundtrip(self, tmp_path):
        g = labelled_graph()
        c0 = Partition.from_labels([0, 0, 1, 1, 2, 2])
        c1 = Partition.from_labels([0, 0, 1])
        st_ = build_layer_stack(g, np.linspace(1, 2, 6), [c0, c1], "additive")
        write_stack(tmp_path, st_)
        back = read_stack(tmp_path)
        assert back.scheme == st_.scheme and back.sizes == st_.sizes
        for a, b in zip(back.graphs, st_.graphs):
            np.testing.assert_allclose(a.dense(), b.dense(), atol=1e-12)
        np.testing.assert_array_equal(back.weights[0], st_.weights[0])

    def test_tampered_layer_is_rejected(self, tmp_path):
        g = labelled_graph()
        st_ = build_layer_stack(g, None, [Partition.from_labels([0, 0, 0, 1, 1, 1])])
        write_stack(tmp_path, st_)
        (tmp_path / "layer1.tsv").write_text("0\t1\t999\n")
        with pytest.raises(ValidationError):
            read_stack(tmp_path)

    def test_reindex_adds_isolated_nodes(self):
        g = Graph(("a", "b"), Graph.from_edges(2, [(0, 1, 2.0)]).adjacency)
        h = reindex(g, ["b", "c", "a"])
        assert h.node_ids == ("b", "c", "a")
        assert h.edges == {(2, 0): 2.0}
        with pytest.raises(ValidationError):
            reindex(g, ["a"])


class TestFeaturesAndEmbeddings:
    def test_embedding_roundtrip(self):
        g = labelled_graph(1)
        e = svd_embedding(g, 3)
        nodes, l, r = embedding_from_tsv(embedding_to_tsv(e, g.node_ids))
        assert nodes == list(g.node_ids)
        np.testing.assert_array_equal(l, e.l)
        np.testing.assert_array_equal(r, e.r)

    @pytest.mark.parametrize("text", ["", "# header only\n", "a\t1\t2\t3\n", "a\tx\ty\n"])
    def test_embedding_parse_errors(self, text):
        with pytest.raises(ParseError):
            embedding_from_tsv(text)

    def test_feature_dumps(self):
        g = labelled_graph(2, 4)
        st_ = build_layer_stack(g, None, [Partition.from_labels([0, 0, 1, 1])])
        state = FeatureState([np.ones((4, 2)), np.zeros((2, 2))], 3)
        obj = features_to_json(state, st_)
        assert obj["iteration"] == 3 and len(obj["layers"]) == 2
        lines = features_to_tsv(state, st_).splitlines()
        assert len(lines) == 1 + 4 + 2


class TestCheckpoint:
    def full_params(self):
        return ModelParams(
            ActivationParams.init([2, 2], "tanh", seed=1),
            head=OutputHead.affine(2, 3, nonlinearity="sigmoid", normalize_rows=True, seed=2),
            edge_model=EdgeModel.init("gaussian", 2),
            features=[np.ones((4, 2)), np.zeros((2, 2))],
            assembly=AssemblyRule("affine", (1,), {"W": np.eye(4), "bias": np.zeros(4)}),
        )

    def test_roundtrip(self, tmp_path):
        p = self.full_params()
        write_checkpoint(tmp_path / "ck.json", p, {"k": 1}, 7, [1.0, 0.5])
        back, meta = read_checkpoint(tmp_path / "ck.json")
        assert meta["seed"] == 7 and meta["trace"] == [1.0, 0.5]
        a, b = p.named_arrays(), back.named_arrays()
        assert a.keys() == b.keys()
        for k in a:
            np.testing.assert_array_equal(np.asarray(a[k]), b[k])
        assert back.assembly.levels == (1,)

    def test_json_is_deterministic(self):
        assert dumps(params_to_json(self.full_params())) == dumps(params_to_json(self.full_params()))
        obj = json.loads(dumps(params_to_json(self.full_params())))
        assert params_from_json(obj).head.normalize_rows
