import json

import numpy as np
import pytest

from hgnn.cli import main
from hgnn.io import embedding_from_tsv, read_graph, read_stack

from cli_runs import SMALL_COMPARE, artifact_bytes, run_all, write_json


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    codes_a = run_all(root / "a")
    codes_b = run_all(root / "b")
    return root, codes_a, codes_b


def load(path):
    return json.loads(path.read_text())


class TestRuns:
    def test_every_command_succeeds(self, runs):
        _, a, b = runs
        assert set(a.values()) == {0} and set(b.values()) == {0}

    def test_reruns_are_byte_identical(self, runs):
        root, _, _ = runs
        a, b = artifact_bytes(root / "a"), artifact_bytes(root / "b")
        assert a.keys() == b.keys()
        assert [k for k in a if a[k] != b[k]] == []

    def test_reports_carry_seed_and_hash(self, runs):
        root, _, _ = runs
        for rel in ("gen/report.json", "part/report.json", "embf/embedding.json", "train/report.json",
                    "coms/report.json", "comh/report.json", "cmp/report.json", "eval/metrics.json"):
            rep = load(root / "a" / rel)
            assert rep["seed"] == 3, rel
            assert len(rep["config_hash"]) == 16, rel

    def test_generate_matches_library(self, runs):
        from hgnn.synthetic import PlantedHierarchy

        root, _, _ = runs
        g = read_graph(root / "a" / "gen" / "graph.tsv")
        want = PlantedHierarchy(levels=2, branching=2, base_block_size=4, p_in=(0.9, 0.3), p_out=0.02).generate(3)
        assert g.num_edges == want.num_edges

    def test_partition_stack_reloads(self, runs):
        root, _, _ = runs
        st_ = read_stack(root / "a" / "part" / "stack")
        assert st_.sizes[0] == 16 and len(st_) == 3

    def test_flat_embedding_is_scored_consistently(self, runs):
        root, _, _ = runs
        meta = load(root / "a" / "embf" / "embedding.json")
        metrics = load(root / "a" / "eval" / "metrics.json")
        assert metrics["nmse"] == pytest.approx(meta["nmse"], abs=1e-12)
        nodes, l, r = embedding_from_tsv((root / "a" / "embf" / "embedding.tsv").read_text())
        assert l.shape == (16, 8)

    def test_hierarchical_embedding_report(self, runs):
        root, _, _ = runs
        meta = load(root / "a" / "embh" / "embedding.json")
        assert meta["provenance"] == "hgnn"
        sizes, ranks = meta["layer_sizes"], meta["ranks"]
        assert meta["effective_dimensionality"] == pytest.approx(sum(n * d for n, d in zip(sizes, ranks)) / sizes[0])

    def test_compare_records(self, runs):
        root, _, _ = runs
        rep = load(root / "a" / "cmp" / "report.json")
        assert [r["effective_dimensionality"] for r in rep["records"] if r["model"] == "flat"] == [2.0, 4.0]
        for r in rep["records"]:
            assert r["seeds"] == [3, 4]
            assert "wall_time" not in r
            assert r["nmse"]["min"] <= r["nmse"]["median"] <= r["nmse"]["max"]

    def test_communities_soft_reports_both_scores(self, runs):
        root, _, _ = runs
        rep = load(root / "a" / "comh" / "report.json")
        assert rep["method"] == "hgnn_soft" and "soft_modularity" in rep


class TestSmallCases:
    def test_full_rank_flat_embedding(self, tmp_path):
        (tmp_path / "g.tsv").write_text("a\tb\t1\nb\tc\t2\nc\ta\t0.5\n")
        cfg = write_json(tmp_path / "c.json", {"dims": [3]})
        assert main(["embed", "--graph", str(tmp_path / "g.tsv"), "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
        assert load(tmp_path / "o" / "embedding.json")["nmse"] <= 1e-8

    def test_hierarchical_with_zero_hidden_ranks_equals_flat(self, tmp_path):
        g = np.random.default_rng(0).uniform(0, 1, (8, 8)) * (np.random.default_rng(1).random((8, 8)) < 0.5)
        lines = [f"v{i}\tv{j}\t{float(g[i, j])!r}" for i in range(8) for j in range(8) if i != j and g[i, j] > 0]
        (tmp_path / "g.tsv").write_text("\n".join(lines) + "\n")
        flat = write_json(tmp_path / "f.json", {"dims": [3]})
        hier = write_json(tmp_path / "h.json", {"pipeline": "hierarchical", "dims": [3, 0], "hierarchy": {"levels": 1}})
        graph = str(tmp_path / "g.tsv")
        assert main(["embed", "--graph", graph, "--config", str(flat), "--out", str(tmp_path / "f")]) == 0
        assert main(["embed", "--graph", graph, "--config", str(hier), "--out", str(tmp_path / "h")]) == 0
        a = load(tmp_path / "f" / "embedding.json")["nmse"]
        b = load(tmp_path / "h" / "embedding.json")["nmse"]
        assert b == pytest.approx(a, abs=1e-9)

    def test_single_clique_partition(self, tmp_path):
        lines = [f"{i}\t{j}\t1" for i in range(5) for j in range(5) if i != j]
        (tmp_path / "g.tsv").write_text("\n".join(lines))
        assert main(["partition", "--graph", str(tmp_path / "g.tsv"), "--levels", "1", "--out", str(tmp_path / "o")]) == 0
        rep = load(tmp_path / "o" / "report.json")
        assert rep["sizes"] == [5, 1] and rep["modularity"] == [0.0]

    def test_two_cliques_by_both_methods(self, tmp_path):
        from hgnn.graph import write_edge_list
        from hgnn.synthetic import two_cliques

        g, truth = two_cliques()
        (tmp_path / "g.tsv").write_text(write_edge_list(g))
        for method in ("modularity_search", "hgnn_soft"):
            out = tmp_path / method
            assert main(["communities", "--graph", str(tmp_path / "g.tsv"), "--method", method, "--out", str(out)]) == 0
            part = load(out / "partition.json")
            groups = [row[0][0] for row in part["assignments"]]
            labels = dict(zip(part["nodes"], groups))
            got = [labels[x] for x in g.node_ids]
            assert len(set(got[:4])) == 1 and len(set(got[4:])) == 1 and got[0] != got[4]

    def test_empty_grid_gives_empty_report(self, tmp_path):
        cfg = write_json(tmp_path / "c.json", {**SMALL_COMPARE, "flat_dims": [], "hierarchical_ranks": []})
        assert main(["compare", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
        assert load(tmp_path / "o" / "report.json")["records"] == []

    def test_timing_is_opt_in(self, tmp_path):
        cfg = write_json(tmp_path / "c.json", {**SMALL_COMPARE, "replicas": 1, "flat_dims": [2], "hierarchical_ranks": []})
        assert main(["compare", "--config", str(cfg), "--timing", "--out", str(tmp_path / "o")]) == 0
        assert "wall_time" in load(tmp_path / "o" / "report.json")["records"][0]


class TestExitCodes:
    def test_levels_zero_is_usage_error(self, tmp_path):
        (tmp_path / "g.tsv").write_text("a\tb\t1\n")
        assert main(["partition", "--graph", str(tmp_path / "g.tsv"), "--levels", "0", "--out", str(tmp_path / "o")]) == 2

    def test_missing_required_flag(self, tmp_path):
        assert main(["partition", "--out", str(tmp_path)]) == 2

    def test_config_error_names_field(self, tmp_path, capsys):
        (tmp_path / "g.tsv").write_text("a\tb\t1\n")
        cfg = write_json(tmp_path / "c.json", {"hierarchy": {"levls": 2}})
        code = main(["embed", "--graph", str(tmp_path / "g.tsv"), "--config", str(cfg), "--out", str(tmp_path / "o")])
        assert code == 2
        assert "config.hierarchy.levls" in capsys.readouterr().err

    def test_malformed_graph(self, tmp_path):
        (tmp_path / "g.tsv").write_text("a\tb\tNaN\n")
        assert main(["communities", "--graph", str(tmp_path / "g.tsv"), "--out", str(tmp_path / "o")]) == 2

    def test_negative_weights(self, tmp_path):
        (tmp_path / "g.tsv").write_text("a\tb\t-1\nb\ta\t1\n")
        assert main(["communities", "--graph", str(tmp_path / "g.tsv"), "--out", str(tmp_path / "o")]) == 2

    def test_missing_file(self, tmp_path):
        assert main(["communities", "--graph", str(tmp_path / "nope.tsv"), "--out", str(tmp_path / "o")]) == 4

    def test_unwritable_output(self, tmp_path):
        (tmp_path / "g.tsv").write_text("a\tb\t1\nb\ta\t1\n")
        (tmp_path / "blocker").write_text("")
        assert main(["communities", "--graph", str(tmp_path / "g.tsv"), "--out", str(tmp_path / "blocker" / "o")]) == 4
