"""On-disk formats: partitions, layer-stack manifests, features, embeddings, checkpoints.

All JSON is written with a fixed key order and ``repr`` floats so equal
inputs give byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .errors import ParseError, ValidationError
from .graph import Graph, load_edge_list, write_edge_list
from .hierarchy import LayerStack, Partition, PartitionKind, build_layer_stack
from .objectives import EdgeModel
from .propagation import ActivationParams, FeatureState, OutputHead


def dumps(obj) -> str:
    return json.dumps(_plain(obj), indent=2, allow_nan=False) + "\n"


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, ad.Tensor):
        obj = obj.value
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):  # enums
        return obj.value
    return obj


def config_hash(config) -> str:
    text = json.dumps(_plain(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def write_text(path: Path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def read_graph(path, directed=True) -> Graph:
    with open(path, encoding="utf-8", newline="") as fh:
        return load_edge_list(fh.read(), directed)


def reindex(g: Graph, nodes) -> Graph:
    """Reorder ``g`` to the given label order; labels absent from ``g`` become isolated nodes."""
    nodes = [str(x) for x in nodes]
    pos = {label: i for i, label in enumerate(nodes)}
    missing = [x for x in g.node_ids if x not in pos]
    if missing:
        raise ValidationError(f"graph node {missing[0]!r} not in the node list")
    coo = g.adjacency.tocoo()
    remap = np.array([pos[x] for x in g.node_ids], dtype=np.int64)
    a = sp.coo_matrix((coo.data, (remap[coo.row], remap[coo.col])), shape=(len(nodes), len(nodes))).tocsr()
    return Graph(tuple(nodes), a, g.directed)


# partitions ---------------------------------------------------------------

def partition_to_json(c: Partition, nodes) -> dict:
    m = c.matrix
    assignments = []
    for i in range(c.rows):
        lo, hi = m.indptr[i], m.indptr[i + 1]
        assignments.append([[c.groups[j], float(p)] for j, p in zip(m.indices[lo:hi], m.data[lo:hi])])
    return {"kind": c.kind.value, "nodes": list(nodes), "groups": list(c.groups), "assignments": assignments}


def partition_from_json(obj, nodes=None) -> tuple[Partition, list[str]]:
    """Parse either the full form or the short ``{label: group}`` discrete form.

    With ``nodes`` given, rows are reordered to that label order.
    """
    if not isinstance(obj, dict):
        raise ParseError("partition file must hold a JSON object")
    if "assignments" in obj:
        file_nodes = [str(x) for x in obj["nodes"]]
        rows = obj["assignments"]
        if len(rows) != len(file_nodes):
            raise ParseError(f"{len(rows)} assignment rows for {len(file_nodes)} nodes")
        groups = [str(g) for g in obj.get("groups", [])]
        for row in rows:
            for g, _ in row:
                if str(g) not in groups:
                    groups.append(str(g))
        kind = obj.get("kind")
    else:
        file_nodes = [str(k) for k in obj]
        groups = []
        for g in obj.values():
            if str(g) not in groups:
                groups.append(str(g))
        rows = [[[str(g), 1.0]] for g in obj.values()]
        kind = PartitionKind.DISCRETE.value
    order = file_nodes if nodes is None else [str(x) for x in nodes]
    where = {label: i for i, label in enumerate(file_nodes)}
    gidx = {g: j for j, g in enumerate(groups)}
    r, c, v = [], [], []
    for i, label in enumerate(order):
        if label not in where:
            raise ParseError(f"node {label!r} missing from partition")
        for g, p in rows[where[label]]:
            r.append(i)
            c.append(gidx[str(g)])
            v.append(float(p))
    m = sp.coo_matrix((v, (r, c)), shape=(len(order), len(groups))).tocsr()
    if kind is None:
        kind = PartitionKind.DISCRETE if np.all(np.diff(m.indptr) == 1) and np.all(m.data == 1.0) else PartitionKind.PROBABILISTIC
    return Partition(m, kind, groups), order


def write_partition(path, c: Partition, nodes):
    write_text(path, dumps(partition_to_json(c, nodes)))


def read_partition(path, nodes=None) -> Partition:
    with open(path, encoding="utf-8") as fh:
        return partition_from_json(json.load(fh), nodes)[0]


# layer stacks -------------------------------------------------------------

def write_stack(directory, stack: LayerStack):
    d = Path(directory)
    layers = []
    for h, (g, v) in enumerate(zip(stack.graphs, stack.weights)):
        name = f"layer{h}.tsv"
        write_text(d / name, write_edge_list(g))
        layers.append({"level": h, "edges": name, "nodes": list(g.node_ids), "weights": v})
    parts = []
    for h, c in enumerate(stack.partitions):
        name = f"partition{h}.json"
        write_partition(d / name, c, stack.graphs[h].node_ids)
        parts.append(name)
    manifest = {"scheme": stack.scheme.value, "directed": stack.graphs[0].directed, "layers": layers, "partitions": parts}
    write_text(d / "manifest.json", dumps(manifest))


def read_stack(directory, check_tol: float = 1e-10) -> LayerStack:
    """Rebuild from the manifest; stored aggregate layers must match recomputation."""
    d = Path(directory)
    with open(d / "manifest.json", encoding="utf-8") as fh:
        man = json.load(fh)
    layers = man["layers"]
    graphs = []
    for entry in layers:
        text = (d / entry["edges"]).read_text(encoding="utf-8")
        g = load_edge_list(text, True) if text.strip() else Graph.empty(0)
        graphs.append(reindex(g, entry["nodes"]))
    parts = [read_partition(d / name, layers[h]["nodes"]) for h, name in enumerate(man["partitions"])]
    stack = build_layer_stack(graphs[0], np.asarray(layers[0]["weights"], dtype=np.float64), parts, man["scheme"])
    for h, g in enumerate(graphs[1:], start=1):
        diff = abs(stack.graphs[h].adjacency - g.adjacency)
        if diff.nnz and diff.max() > check_tol * max(1.0, abs(g.adjacency).max()):
            raise ValidationError(f"stored layer {h} does not match the aggregated layer")
    return stack


# features and embeddings --------------------------------------------------

def features_to_json(state: FeatureState, stack: LayerStack) -> dict:
    return {
        "iteration": state.iteration,
        "layers": [{"level": h, "nodes": list(g.node_ids), "features": x} for h, (g, x) in enumerate(zip(stack.graphs, state.values()))],
    }


def features_to_tsv(state: FeatureState, stack: LayerStack) -> str:
    lines = ["# level\tnode\tfeatures..."]
    for h, (g, x) in enumerate(zip(stack.graphs, state.values())):
        for label, row in zip(g.node_ids, x):
            lines.append("\t".join([str(h), label, *(repr(float(v)) for v in row)]))
    return "\n".join(lines) + "\n"


def embedding_to_tsv(e, nodes) -> str:
    lv, rv = np.asarray(ad.value_of(e.l)), np.asarray(ad.value_of(e.r))
    d = lv.shape[1]
    header = "\t".join(["# node", *(f"l{k}" for k in range(d)), *(f"r{k}" for k in range(d))])
    lines = [header]
    for label, a, b in zip(nodes, lv, rv):
        lines.append("\t".join([label, *(repr(float(v)) for v in a), *(repr(float(v)) for v in b)]))
    return "\n".join(lines) + "\n"


def embedding_from_tsv(text: str):
    """Returns (nodes, l, r)."""
    nodes, rows = [], []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.rstrip("\r").split("\t")
        if (len(parts) - 1) % 2:
            raise ParseError("expected a label followed by l and r halves of equal length", lineno)
        try:
            rows.append([float(x) for x in parts[1:]])
        except ValueError:
            raise ParseError("non-numeric embedding value", lineno) from None
        nodes.append(parts[0])
    if not rows:
        raise ParseError("embedding file is empty")
    arr = np.asarray(rows)
    d = arr.shape[1] // 2
    return nodes, arr[:, :d], arr[:, d:]


# checkpoints --------------------------------------------------------------

def params_to_json(params) -> dict:
    out = {
        "activation": [
            {"nonlinearity": ap.nonlinearity, "mlp_hidden": ap.mlp_hidden, "layers": ap.layers} for ap in params.activation
        ]
    }
    if params.head is not None:
        h = params.head
        out["head"] = {"target": h.target.value, "nonlinearity": h.nonlinearity, "normalize_rows": h.normalize_rows,
                       "weight": h.weight, "bias": h.bias}
    if params.edge_model is not None:
        em = params.edge_model
        out["edge_model"] = {"kind": em.kind.value, "mean_nonlinearity": em.mean_nonlinearity,
                             "fixed_sigma": em.fixed_sigma, "params": em.params}
    if params.features is not None:
        out["features"] = params.features
    if params.assembly is not None:
        out["assembly"] = {"theta": params.assembly.theta.value, "levels": params.assembly.levels,
                           "weights": params.assembly.weights}
    return out


def _arr(x):
    return None if x is None else np.asarray(x, dtype=np.float64)


def params_from_json(obj):
    from .embedding import AssemblyRule
    from .training import ModelParams

    acts = [
        ActivationParams([{k: _arr(v) for k, v in blk.items()} for blk in ap["layers"]], ap["nonlinearity"], ap["mlp_hidden"])
        for ap in obj["activation"]
    ]
    head = None
    if "head" in obj:
        h = obj["head"]
        head = OutputHead(h["target"], _arr(h["weight"]), _arr(h["bias"]), h["nonlinearity"], h["normalize_rows"])
    em = None
    if "edge_model" in obj:
        e = obj["edge_model"]
        params = {g: {k: _arr(v) for k, v in p.items()} for g, p in e["params"].items()}
        em = EdgeModel(e["kind"], params, e["mean_nonlinearity"], e["fixed_sigma"])
    feats = [_arr(x) for x in obj["features"]] if "features" in obj else None
    asm = None
    if "assembly" in obj:
        a = obj["assembly"]
        asm = AssemblyRule(a["theta"], None if a["levels"] is None else tuple(a["levels"]), {k: _arr(v) for k, v in a["weights"].items()})
    return ModelParams(acts, head, em, feats, asm)


def write_checkpoint(path, params, config, seed, trace):
    write_text(path, dumps({"seed": seed, "config": config, "trace": list(trace), "params": params_to_json(params)}))


def read_checkpoint(path):
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    return params_from_json(obj["params"]), obj
