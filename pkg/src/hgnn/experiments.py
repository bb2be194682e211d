"""Experiment pipelines shared by the CLI and the scripts.

``compare`` is the flat-versus-hierarchical sweep: for each grid point it
embeds the same seeded replicas and records the NMSE distribution against
the effective dimensionality.
"""

from __future__ import annotations

import logging
import time

import numpy as np

from .community import hardened, infer_nested_hierarchy, infer_partition_modularity
from .config import CommunitiesConfig, CompareConfig, to_dict
from .embedding import effective_dimensionality, hierarchical_svd_embedding, reconstruction_nmse, svd_embedding
from .graph import Graph, default_node_weights
from .hierarchy import LayerStack, Partition, build_layer_stack
from .io import config_hash
from .objectives import modularity
from .propagation import ActivationParams, OutputHead, PropagationConfig
from .training import ModelParams, SoftModularity, TrainConfig, train

log = logging.getLogger(__name__)


def inferred_stack(g: Graph, levels: int, scheme="additive", restarts: int = 8, seed: int = 0,
                   history: Graph | None = None) -> LayerStack:
    """Layer stack over ``g`` whose partitions come from modularity search.

    With ``history`` the partitions and node weights are taken from that
    graph (same node set) instead of from ``g`` itself.
    """
    src = history if history is not None else g
    parts = infer_nested_hierarchy(src, levels, restarts, seed) if levels else []
    return build_layer_stack(g, default_node_weights(src), parts, scheme)


def clip_ranks(ranks, sizes) -> list[int]:
    return [min(int(r), int(s)) for r, s in zip(ranks, sizes)]


def flat_nmse(g: Graph, d: int, seed: int = 0) -> float:
    return reconstruction_nmse(g, svd_embedding(g, min(d, g.n), seed))


def hierarchical_nmse(g: Graph, stack: LayerStack, ranks, seed: int = 0) -> tuple[float, float, list[int]]:
    """Returns (NMSE, effective dimensionality, ranks actually used)."""
    used = clip_ranks(ranks, stack.sizes)
    emb, _ = hierarchical_svd_embedding(g, stack, used, seed)
    return reconstruction_nmse(g, emb), effective_dimensionality(stack, used), used


def _summary(values) -> dict:
    v = np.asarray(values, dtype=np.float64)
    return {"min": float(v.min()), "median": float(np.median(v)), "max": float(v.max()), "values": [float(x) for x in v]}


def compare(cfg: CompareConfig, seed: int = 0, timing: bool = False) -> dict:
    """Flat and hierarchical embeddings on the same ``cfg.replicas`` instances.

    Replica r is the planted graph drawn with seed ``seed + r``. The
    hierarchy is either the planted one or inferred once from a history
    draw (seed ``seed + cfg.history_offset``). Wall time is only recorded
    with ``timing=True`` because it would break byte-identical reports.
    """
    chash = config_hash({"config": to_dict(cfg), "seed": seed})
    spec = cfg.synthetic
    seeds = [seed + r for r in range(cfg.replicas)]
    if not cfg.flat_dims and not cfg.hierarchical_ranks:
        return {"config_hash": chash, "seed": seed, "config": to_dict(cfg), "records": []}

    if cfg.hierarchy == "planted":
        parts: list[Partition] = spec.planted_partitions()
        weights_from = None
    else:
        history = spec.generate(seed + cfg.history_offset)
        parts = infer_nested_hierarchy(history, spec.levels, cfg.restarts, seed)
        weights_from = history
    log.info("hierarchy sizes %s", [p.cols for p in parts])

    flat_vals = {d: [] for d in cfg.flat_dims}
    hier_vals = {i: [] for i in range(len(cfg.hierarchical_ranks))}
    flat_time = {d: 0.0 for d in cfg.flat_dims}
    hier_time = {i: 0.0 for i in hier_vals}
    sizes, used_ranks, eff = None, {}, {}
    for s in seeds:
        g = spec.generate(s)
        for d in cfg.flat_dims:
            t0 = time.perf_counter()
            flat_vals[d].append(flat_nmse(g, d, s))
            flat_time[d] += time.perf_counter() - t0
        v0 = default_node_weights(weights_from if weights_from is not None else g)
        stack = build_layer_stack(g, v0, parts, cfg.scheme)
        sizes = stack.sizes
        for i, ranks in enumerate(cfg.hierarchical_ranks):
            t0 = time.perf_counter()
            err, eff[i], used_ranks[i] = hierarchical_nmse(g, stack, ranks, s)
            hier_vals[i].append(err)
            hier_time[i] += time.perf_counter() - t0

    records = []
    for d in cfg.flat_dims:
        rec = {"model": "flat", "ranks": [d], "layer_sizes": [spec.n], "effective_dimensionality": float(min(d, spec.n)),
               "nmse": _summary(flat_vals[d]), "seeds": seeds, "config_hash": chash}
        if timing:
            rec["wall_time"] = flat_time[d]
        records.append(rec)
    for i, ranks in enumerate(cfg.hierarchical_ranks):
        rec = {"model": "hierarchical", "ranks": list(ranks), "ranks_used": used_ranks[i], "layer_sizes": sizes,
               "effective_dimensionality": eff[i], "nmse": _summary(hier_vals[i]), "seeds": seeds, "config_hash": chash}
        if timing:
            rec["wall_time"] = hier_time[i]
        records.append(rec)
    return {"config_hash": chash, "seed": seed, "config": to_dict(cfg), "records": records}


# communities --------------------------------------------------------------

def modularity_communities(g: Graph, cfg: CommunitiesConfig, seed: int = 0) -> tuple[Partition, float]:
    c = infer_partition_modularity(g, cfg.restarts, seed)
    return c, float(modularity(g, c))


def soft_communities(g: Graph, cfg: CommunitiesConfig, seed: int = 0):
    """Train a one-layer recurrent HGNN whose sigmoid head, row-normalized, is a soft assignment.

    Returns (hardened partition, its modularity, soft assignment, train report).
    """
    stack = build_layer_stack(g)
    pcfg = PropagationConfig(iterations=cfg.iterations, derivative_kind=cfg.derivative_kind,
                             init="uniform", init_range=cfg.init_range, seed=seed)
    params = ModelParams(
        ActivationParams.init([cfg.dim], cfg.nonlinearity, seed=seed),
        head=OutputHead.affine(cfg.dim, cfg.groups, nonlinearity="sigmoid", normalize_rows=True, seed=seed),
    )
    objective = SoftModularity(g)
    tcfg = TrainConfig(steps=cfg.steps, learning_rate=cfg.learning_rate, momentum=cfg.momentum, seed=seed)
    fitted, report = train(stack, params, pcfg, objective, tcfg)
    soft = np.asarray(objective.assignment(fitted, stack, pcfg))
    c = hard_partition(soft)
    return c, float(modularity(g, c)), soft, report


def hard_partition(soft) -> Partition:
    """Argmax hardening (lowest index wins ties); empty groups are dropped and the rest renumbered."""
    _, labels = np.unique(hardened(soft), return_inverse=True)
    k = int(labels.max()) + 1
    return Partition.from_labels(labels, k, groups=[str(j) for j in range(k)])
