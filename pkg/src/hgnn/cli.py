"""``hgnn`` command line.

Every subcommand writes into ``--out`` and is deterministic under
``--seed``. Exit codes: 0 success, 2 invalid input or usage, 3 numeric
failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .community import infer_nested_hierarchy
from .config import (
    CommunitiesConfig,
    CompareConfig,
    EmbedConfig,
    GenerateConfig,
    TrainRunConfig,
    load_config,
    to_dict,
)
from .embedding import (
    AssemblyRule,
    EmbeddingResult,
    effective_dimensionality,
    hierarchical_svd_embedding,
    reconstruction_nmse,
    svd_embedding,
)
from .errors import HGNNError, NumericError, ValidationError
from .experiments import clip_ranks, compare, hard_partition, modularity_communities, soft_communities
from .graph import Graph, default_node_weights
from .hierarchy import build_layer_stack
from .objectives import EdgeModel, log_likelihood, modularity
from .propagation import ActivationParams, OutputHead, PropagationConfig
from .synthetic import PlantedHierarchy
from .training import EmbeddingLikelihood, ModelParams, SoftModularity, SquaredError, TrainConfig, forward, train

log = logging.getLogger("hgnn")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


def _file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def _report(args, config, **fields) -> dict:
    echo = to_dict(config) if config is not None else None
    head = {"command": args.command, "seed": args.seed, "config_hash": io.config_hash({"config": echo, "args": _arg_echo(args)})}
    if getattr(args, "graph", None):
        head["input_hash"] = _file_hash(args.graph)
    head["config"] = echo
    head.update(fields)
    return head


def _arg_echo(args) -> dict:
    skip = {"out", "config", "graph", "func", "verbose", "embedding", "stack"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _partitions_from_files(g: Graph, paths):
    parts, nodes = [], list(g.node_ids)
    for p in paths:
        c = io.read_partition(p, nodes)
        parts.append(c)
        nodes = list(c.groups)
    return parts


# subcommands --------------------------------------------------------------

def cmd_generate(args) -> int:
    cfg = load_config(GenerateConfig, args.config)
    model = cfg.model
    g = model.generate(args.seed)
    out = Path(args.out)
    io.write_text(out / "graph.tsv", io.write_edge_list(g) if g.num_edges else "")
    fields = {"n": g.n, "num_edges": g.num_edges, "total_weight": g.total_weight()}
    if isinstance(model, PlantedHierarchy):
        nodes = list(g.node_ids)
        names = []
        for k, c in enumerate(model.planted_partitions()):
            name = f"planted{k}.json"
            io.write_partition(out / name, c, nodes)
            names.append(name)
            nodes = list(c.groups)
        fields["planted_partitions"] = names
    io.write_text(out / "report.json", io.dumps(_report(args, cfg, **fields)))
    return EXIT_OK


def cmd_partition(args) -> int:
    if args.levels < 1:
        raise ValidationError("--levels must be >= 1")
    g = io.read_graph(args.graph)
    parts = infer_nested_hierarchy(g, args.levels, args.restarts, args.seed)
    stack = build_layer_stack(g, default_node_weights(g), parts, args.scheme)
    out = Path(args.out)
    io.write_stack(out / "stack", stack)
    qs = [float(modularity(stack.graphs[h], c)) if stack.graphs[h].total_weight() > 0 else 0.0
          for h, c in enumerate(parts)]
    report = _report(args, None, sizes=stack.sizes, modularity=qs, stack="stack/manifest.json")
    io.write_text(out / "report.json", io.dumps(report))
    return EXIT_OK


def cmd_embed(args) -> int:
    cfg = load_config(EmbedConfig, args.config)
    g = io.read_graph(args.graph)
    out = Path(args.out)
    fields: dict = {}
    if cfg.pipeline == "flat":
        d = cfg.dims[0]
        emb = svd_embedding(g, min(d, g.n), args.seed)
        fields.update(ranks=[emb.d], layer_sizes=[g.n], effective_dimensionality=float(emb.d))
    else:
        h = cfg.hierarchy
        if args.stack:
            stack = io.read_stack(args.stack)
        elif h.partitions:
            stack = build_layer_stack(g, default_node_weights(g), _partitions_from_files(g, h.partitions), h.scheme)
        else:
            parts = infer_nested_hierarchy(g, h.levels, h.restarts, args.seed) if h.levels else []
            stack = build_layer_stack(g, default_node_weights(g), parts, h.scheme)
        if len(cfg.dims) != len(stack):
            raise ValidationError(f"config.dims: {len(cfg.dims)} ranks for a {len(stack)}-layer stack")
        ranks = clip_ranks(cfg.dims, stack.sizes)
        if ranks[0] == 0 and sum(ranks) == 0:
            raise ValidationError("config.dims: at least one rank must be positive")
        emb, state = hierarchical_svd_embedding(g, stack, ranks, args.seed)
        io.write_stack(out / "stack", stack)
        io.write_text(out / "features.json", io.dumps(io.features_to_json(state, stack)))
        fields.update(ranks=ranks, layer_sizes=stack.sizes, effective_dimensionality=effective_dimensionality(stack, ranks))
    emb.model.fixed_sigma = cfg.fixed_sigma
    err = reconstruction_nmse(g, emb)
    ll = float(log_likelihood(g, emb.l, emb.r, emb.model))
    io.write_text(out / "embedding.tsv", io.embedding_to_tsv(emb, g.node_ids))
    meta = _report(args, cfg, d=emb.d, model=emb.model.kind.value, fixed_sigma=cfg.fixed_sigma,
                   provenance=emb.provenance.value, nmse=err, log_likelihood=ll, **fields)
    io.write_text(out / "embedding.json", io.dumps(meta))
    return EXIT_OK


def _train_setup(g: Graph, cfg: TrainRunConfig, seed: int):
    h = cfg.hierarchy
    if h.partitions:
        parts = _partitions_from_files(g, h.partitions)
    else:
        parts = infer_nested_hierarchy(g, h.levels, h.restarts, seed) if h.levels else []
    stack = build_layer_stack(g, default_node_weights(g), parts, h.scheme)
    dims = list(cfg.dims) * len(stack) if len(cfg.dims) == 1 else list(cfg.dims)
    if len(dims) != len(stack):
        raise ValidationError(f"config.dims: {len(dims)} widths for a {len(stack)}-layer stack")
    p = cfg.propagation
    pcfg = PropagationConfig(iterations=p.iterations, mode=p.mode, derivative_kind=p.derivative_kind,
                             init=p.init, init_range=p.init_range, seed=seed)
    n_sets = 1 if pcfg.mode.value == "recurrent" else pcfg.iterations
    acts = [ActivationParams.init(dims, p.nonlinearity, p.mlp_hidden, seed=seed + s) for s in range(n_sets)]
    params = ModelParams(acts)
    if cfg.objective == "modularity":
        params.head = OutputHead.affine(dims[0], cfg.groups, nonlinearity="sigmoid", normalize_rows=True, seed=seed)
        objective = SoftModularity(g)
    else:
        d_out = sum(dims) // 2
        params.assembly = AssemblyRule()
        if cfg.objective == "squared_error":
            objective = SquaredError(g)
        else:
            params.edge_model = EdgeModel.init(cfg.edge_model, d_out)
            objective = EmbeddingLikelihood(g)
    t = cfg.training
    tcfg = TrainConfig(method=t.method, steps=t.steps, learning_rate=t.learning_rate, lr_decay=t.lr_decay,
                       momentum=t.momentum, clip_norm=t.clip_norm, population=t.population, noise=t.noise,
                       noise_decay=t.noise_decay, elite_fraction=t.elite_fraction, seed=seed,
                       tolerance=t.tolerance, freeze=tuple(t.freeze))
    return stack, params, pcfg, objective, tcfg


def cmd_train(args) -> int:
    cfg = load_config(TrainRunConfig, args.config)
    g = io.read_graph(args.graph)
    stack, params, pcfg, objective, tcfg = _train_setup(g, cfg, args.seed)
    fitted, rep = train(stack, params, pcfg, objective, tcfg)
    out = Path(args.out)
    io.write_checkpoint(out / "checkpoint.json", fitted, to_dict(cfg), args.seed, rep.trace)
    fields = {"objective": cfg.objective, "final_objective": rep.final_objective, "converged": rep.converged,
              "steps_run": len(rep.trace), "layer_sizes": stack.sizes}
    if cfg.objective == "modularity":
        c = hard_partition(np.asarray(objective.assignment(fitted, stack, pcfg)))
        io.write_partition(out / "partition.json", c, g.node_ids)
        fields["hard_modularity"] = float(modularity(g, c))
    else:
        state = forward(fitted, stack, pcfg)
        io.write_text(out / "features.json", io.dumps(io.features_to_json(state, stack)))
    io.write_text(out / "report.json", io.dumps(_report(args, cfg, **fields)))
    return EXIT_OK


def cmd_communities(args) -> int:
    cfg = load_config(CommunitiesConfig, args.config)
    g = io.read_graph(args.graph)
    fields: dict = {"method": args.method}
    if args.method == "modularity_search":
        c, q = modularity_communities(g, cfg, args.seed)
    else:
        c, q, _, rep = soft_communities(g, cfg, args.seed)
        fields["soft_modularity"] = rep.final_objective
    out = Path(args.out)
    io.write_partition(out / "partition.json", c, g.node_ids)
    fields.update(groups=c.cols, modularity=q)
    io.write_text(out / "report.json", io.dumps(_report(args, cfg, **fields)))
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = load_config(CompareConfig, args.config)
    report = compare(cfg, args.seed, timing=args.timing)
    report = {"command": "compare", **report}
    io.write_text(Path(args.out) / "report.json", io.dumps(report))
    return EXIT_OK


def cmd_eval(args) -> int:
    g = io.read_graph(args.graph)
    text = Path(args.embedding).read_text(encoding="utf-8")
    nodes, l, r = io.embedding_from_tsv(text)
    if sorted(nodes) != sorted(g.node_ids):
        raise ValidationError("embedding node labels do not match the graph")
    order = [nodes.index(x) for x in g.node_ids]
    emb = EmbeddingResult(l[order], r[order], EdgeModel.init("gaussian_fixed_sigma", l.shape[1], fixed_sigma=args.sigma))
    fields = {"n": g.n, "d": emb.d, "nmse": reconstruction_nmse(g, emb),
              "log_likelihood": float(log_likelihood(g, emb.l, emb.r, emb.model)), "fixed_sigma": args.sigma,
              "embedding_hash": _file_hash(args.embedding)}
    io.write_text(Path(args.out) / "metrics.json", io.dumps(_report(args, None, **fields)))
    return EXIT_OK


# parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed for every random draw (default 0)")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--config", default=None, help="JSON config file (defaults used when omitted)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="hgnn", description="Hierarchical graph neural network toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="draw a synthetic graph")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("partition", parents=[common], help="infer nested modularity partitions")
    p.add_argument("--graph", required=True)
    p.add_argument("--levels", type=int, required=True)
    p.add_argument("--scheme", choices=("averaging", "additive"), default="additive")
    p.add_argument("--restarts", type=int, default=8)
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("embed", parents=[common], help="flat or hierarchical spectral embedding")
    p.add_argument("--graph", required=True)
    p.add_argument("--stack", default=None, help="directory holding a stack manifest to reuse")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("train", parents=[common], help="train an HGNN against an objective")
    p.add_argument("--graph", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("communities", parents=[common], help="community detection")
    p.add_argument("--graph", required=True)
    p.add_argument("--method", choices=("modularity_search", "hgnn_soft"), default="modularity_search")
    p.set_defaults(func=cmd_communities)

    p = sub.add_parser("compare", parents=[common], help="flat versus hierarchical NMSE sweep")
    p.add_argument("--timing", action="store_true", help="add wall-time to records (breaks byte determinism)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("eval", parents=[common], help="score an embedding against a graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--embedding", required=True)
    p.add_argument("--sigma", type=float, default=1.0)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"hgnn: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericError as exc:
        print(f"hgnn: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"hgnn: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except HGNNError as exc:
        print(f"hgnn: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
