"""Small end-to-end CLI scenarios shared by the CLI and acceptance tests."""

import json
from pathlib import Path

from hgnn.cli import main

SMALL_GRAPH = {
    "generator": "planted_hierarchy",
    "planted_hierarchy": {"levels": 2, "branching": 2, "base_block_size": 4, "p_in": [0.9, 0.3], "p_out": 0.02},
}
SMALL_COMPARE = {
    "synthetic": {"levels": 2, "branching": 2, "base_block_size": 4, "p_in": [0.9, 0.3], "p_out": 0.02,
                  "weight": {"kind": "poisson_flow", "mean": 20.0}},
    "replicas": 2,
    "flat_dims": [2, 4],
    "hierarchical_ranks": [[1, 2, 1]],
}
HIER_EMBED = {"pipeline": "hierarchical", "dims": [2, 2, 2], "hierarchy": {"levels": 2}}
TRAIN = {"objective": "squared_error", "dims": [2], "hierarchy": {"levels": 1},
         "training": {"steps": 5, "learning_rate": 0.05}}
COMMUNITIES = {"steps": 30}


def write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj))
    return path


def run_all(root: Path, seed: int = 3) -> dict:
    """Run every command once under ``root``; returns {command: exit code}."""
    root.mkdir(parents=True, exist_ok=True)
    cfg = root / "cfg"
    cfg.mkdir(exist_ok=True)
    gen = write_json(cfg / "gen.json", SMALL_GRAPH)
    cmp_ = write_json(cfg / "cmp.json", SMALL_COMPARE)
    emb = write_json(cfg / "emb.json", HIER_EMBED)
    trn = write_json(cfg / "train.json", TRAIN)
    com = write_json(cfg / "com.json", COMMUNITIES)
    s = ["--seed", str(seed)]
    graph = str(root / "gen" / "graph.tsv")
    codes = {}
    codes["generate"] = main(["generate", *s, "--config", str(gen), "--out", str(root / "gen")])
    codes["partition"] = main(["partition", *s, "--graph", graph, "--levels", "2", "--out", str(root / "part")])
    codes["embed_flat"] = main(["embed", *s, "--graph", graph, "--out", str(root / "embf")])
    codes["embed_hier"] = main(["embed", *s, "--graph", graph, "--config", str(emb), "--out", str(root / "embh")])
    codes["train"] = main(["train", *s, "--graph", graph, "--config", str(trn), "--out", str(root / "train")])
    codes["communities_search"] = main(["communities", *s, "--graph", graph, "--out", str(root / "coms")])
    codes["communities_soft"] = main(["communities", *s, "--graph", graph, "--method", "hgnn_soft",
                                      "--config", str(com), "--out", str(root / "comh")])
    codes["compare"] = main(["compare", *s, "--config", str(cmp_), "--out", str(root / "cmp")])
    codes["eval"] = main(["eval", *s, "--graph", graph, "--embedding", str(root / "embf" / "embedding.tsv"),
                          "--out", str(root / "eval")])
    return codes


def artifact_bytes(root: Path) -> dict:
    """Every output file under ``root`` (configs excluded) keyed by relative path."""
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*"))
            if p.is_file() and p.relative_to(root).parts[0] != "cfg"}
