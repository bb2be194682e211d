"""Two-dimensional feature propagation over a layer stack.

One step updates every node of every layer from its own features, its
in-layer neighbours (through the derivative matrix), the attached nodes of
the layer below and the attached nodes of the layer above:

    x'(a) = phi(x(a) W_self + sum_b At[b, a] x(b) W_nbr
                + sum_b H_below[b, a] x_below(b) W_down
                + sum_b H_above[b, a] x_above(b) W_up + bias)

All reads come from the current state (Jacobi update). Works on plain
arrays or on autodiff tensors.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .errors import DimensionError, NumericOverflowError, ValidationError
from .graph import DerivativeMatrixKind, derivative_matrix
from .hierarchy import LayerStack

log = logging.getLogger(__name__)

BLOCKS = ("self", "nbr", "down", "up")


class Mode(str, enum.Enum):
    RECURRENT = "recurrent"
    SHALLOW = "shallow"


@dataclass
class FeatureState:
    layers: list
    iteration: int = 0

    @property
    def dims(self) -> list[int]:
        return [ad.value_of(x).shape[1] for x in self.layers]

    def values(self) -> list[np.ndarray]:
        return [np.asarray(ad.value_of(x)) for x in self.layers]

    def check(self, stack: LayerStack):
        if len(self.layers) != len(stack):
            raise DimensionError(f"state has {len(self.layers)} layers, stack has {len(stack)}")
        for h, (x, n) in enumerate(zip(self.layers, stack.sizes)):
            if ad.value_of(x).shape[0] != n:
                raise DimensionError(f"layer {h}: state has {ad.value_of(x).shape[0]} rows, layer has {n} nodes")


@dataclass
class ActivationParams:
    """Weight blocks for one parameter set (all layers).

    ``layers[h]`` maps block names to arrays: ``self``/``nbr`` are
    (d_h or d_h x m), ``down`` is from layer h-1, ``up`` from layer h+1,
    ``bias`` is the pre-activation offset. With ``mlp_hidden = m > 0`` the
    blocks map into an m-wide hidden layer and ``out``/``out_bias`` map it
    back to d_h.
    """

    layers: list[dict]
    nonlinearity: str = "tanh"
    mlp_hidden: int = 0

    @classmethod
    def init(cls, dims: Sequence[int], nonlinearity="tanh", mlp_hidden=0, seed=0, scale=None) -> "ActivationParams":
        rng = np.random.default_rng(seed)
        top = len(dims) - 1
        layers = []
        for h, d in enumerate(dims):
            width = mlp_hidden or d
            inputs = {"self": d, "nbr": d}
            if h > 0:
                inputs["down"] = dims[h - 1]
            if h < top:
                inputs["up"] = dims[h + 1]
            fan_in = max(1, sum(inputs.values()))
            s = scale if scale is not None else 1.0 / np.sqrt(fan_in)
            blocks = {k: rng.normal(0.0, s, size=(din, width)) for k, din in inputs.items()}
            blocks["bias"] = np.zeros(width)
            if mlp_hidden:
                blocks["out"] = rng.normal(0.0, 1.0 / np.sqrt(mlp_hidden), size=(mlp_hidden, d))
                blocks["out_bias"] = np.zeros(d)
            layers.append(blocks)
        return cls(layers, nonlinearity, mlp_hidden)

    @classmethod
    def identity(cls, dims: Sequence[int]) -> "ActivationParams":
        """W_self = I, everything else zero, identity activation: a fixed point."""
        p = cls.init(dims, "identity")
        for h, d in enumerate(dims):
            for k in p.layers[h]:
                p.layers[h][k] = np.zeros_like(p.layers[h][k])
            p.layers[h]["self"] = np.eye(d)
        return p

    def dims(self) -> list[int]:
        if self.mlp_hidden:
            return [blk["out"].shape[1] for blk in self.layers]
        return [blk["self"].shape[1] for blk in self.layers]

    def check(self, dims: Sequence[int]):
        if len(self.layers) != len(dims):
            raise DimensionError(f"parameters cover {len(self.layers)} layers, stack has {len(dims)}")
        top = len(dims) - 1
        width = [self.mlp_hidden or d for d in dims]
        for h, blk in enumerate(self.layers):
            expect = {"self": (dims[h], width[h]), "nbr": (dims[h], width[h]), "bias": (width[h],)}
            if h > 0:
                expect["down"] = (dims[h - 1], width[h])
            if h < top:
                expect["up"] = (dims[h + 1], width[h])
            if self.mlp_hidden:
                expect["out"] = (self.mlp_hidden, dims[h])
                expect["out_bias"] = (dims[h],)
            for k, shape in expect.items():
                if k not in blk:
                    raise DimensionError(f"layer {h}: missing block {k!r}")
                if ad.value_of(blk[k]).shape != shape:
                    raise DimensionError(f"layer {h}: block {k!r} has shape {ad.value_of(blk[k]).shape}, expected {shape}")
            extra = set(blk) - set(expect)
            if extra:
                raise DimensionError(f"layer {h}: unexpected blocks {sorted(extra)}")


@dataclass
class PropagationConfig:
    iterations: int = 1
    mode: Mode = Mode.RECURRENT
    derivative_kind: object = DerivativeMatrixKind.NORMALIZED_ADJACENCY  # one kind or a list per layer
    degree: object = ("out", "out")
    init: str = "uniform"  # uniform | zeros | supplied
    init_range: float = 0.1
    seed: int = 0

    def __post_init__(self):
        self.mode = Mode(self.mode)
        if self.iterations < 1:
            raise ValidationError("iterations must be >= 1")
        if self.init not in ("uniform", "zeros", "supplied"):
            raise ValidationError(f"unknown init {self.init!r}")

    def kind_for(self, h: int) -> DerivativeMatrixKind:
        if isinstance(self.derivative_kind, (list, tuple)):
            return DerivativeMatrixKind(self.derivative_kind[h])
        return DerivativeMatrixKind(self.derivative_kind)


class HeadTarget(str, enum.Enum):
    LAYER0 = "layer0_nodes"
    TOP = "top_layer_nodes"


@dataclass
class OutputHead:
    """Final transform g: identity, or ``phi(X W + bias)`` optionally row-normalized."""

    target: HeadTarget = HeadTarget.LAYER0
    weight: object = None
    bias: object = None
    nonlinearity: str = "identity"
    normalize_rows: bool = False

    def __post_init__(self):
        self.target = HeadTarget(self.target)

    @classmethod
    def affine(cls, d_in, d_out, target=HeadTarget.LAYER0, nonlinearity="identity", normalize_rows=False, seed=0):
        rng = np.random.default_rng(seed)
        w = rng.normal(0.0, 1.0 / np.sqrt(max(1, d_in)), size=(d_in, d_out))
        return cls(target, w, np.zeros(d_out), nonlinearity, normalize_rows)


def incoming_operators(stack: LayerStack, cfg: PropagationConfig) -> list[dict]:
    """Per layer, the matrices M with M @ X = sum over sources into each target.

    Operators are (source, target) indexed, so the incoming form is the transpose.
    """
    ops = []
    for h, g in enumerate(stack.graphs):
        nbr = derivative_matrix(g, cfg.kind_for(h), cfg.degree)
        entry = {"nbr": sp.csr_matrix(nbr.T)}
        below = stack.incoming_from_below(h)
        above = stack.incoming_from_above(h)
        if below is not None:
            entry["down"] = sp.csr_matrix(below.T)
        if above is not None:
            entry["up"] = sp.csr_matrix(above.T)
        ops.append(entry)
    return ops


def initial_state(stack: LayerStack, dims: Sequence[int], cfg: PropagationConfig, supplied=None) -> FeatureState:
    if len(dims) != len(stack):
        raise DimensionError(f"{len(dims)} feature dims for {len(stack)} layers")
    if cfg.init == "supplied":
        if supplied is None:
            raise ValidationError("init='supplied' needs initial features")
        state = FeatureState(list(supplied), 0)
        state.check(stack)
        return state
    if cfg.init == "zeros":
        log.warning("zero initial features: with an identity activation and no bias this is a fixed point")
        return FeatureState([np.zeros((n, d)) for n, d in zip(stack.sizes, dims)], 0)
    rng = np.random.default_rng(cfg.seed)
    r = cfg.init_range
    return FeatureState([rng.uniform(-r, r, size=(n, d)) for n, d in zip(stack.sizes, dims)], 0)


def _check_finite(x, h, i):
    if not np.all(np.isfinite(ad.value_of(x))):
        raise NumericOverflowError(h, i)


def hgnn_step(state: FeatureState, stack: LayerStack, params: ActivationParams, cfg: PropagationConfig | None = None, operators=None) -> FeatureState:
    cfg = cfg or PropagationConfig()
    ops = operators if operators is not None else incoming_operators(stack, cfg)
    state.check(stack)
    phi = ad.nonlinearity(params.nonlinearity)
    xs = state.layers
    new = []
    for h, x in enumerate(xs):
        blk = params.layers[h]
        z = ad.matmul(x, blk["self"])
        z = ad.add(z, ad.matmul(ad.matmul(ops[h]["nbr"], x), blk["nbr"]))
        if "down" in ops[h]:
            z = ad.add(z, ad.matmul(ad.matmul(ops[h]["down"], xs[h - 1]), blk["down"]))
        if "up" in ops[h]:
            z = ad.add(z, ad.matmul(ad.matmul(ops[h]["up"], xs[h + 1]), blk["up"]))
        z = ad.add(z, blk["bias"])
        out = phi(z)
        if params.mlp_hidden:
            out = phi(ad.add(ad.matmul(out, blk["out"]), blk["out_bias"]))
        _check_finite(out, h, state.iteration)
        new.append(out)
    return FeatureState(new, state.iteration + 1)


def _param_sets(params, cfg: PropagationConfig) -> list[ActivationParams]:
    if isinstance(params, ActivationParams):
        params = [params]
    params = list(params)
    if cfg.mode is Mode.RECURRENT and len(params) != 1:
        raise ValidationError(f"recurrent mode takes one parameter set, got {len(params)}")
    if cfg.mode is Mode.SHALLOW and len(params) != cfg.iterations:
        raise ValidationError(f"shallow mode takes {cfg.iterations} parameter sets, got {len(params)}")
    return params


def run(stack: LayerStack, params, cfg: PropagationConfig, state: FeatureState | None = None, dims=None) -> FeatureState:
    """Apply ``cfg.iterations`` steps; shallow mode uses ``params[i]`` at step i."""
    sets = _param_sets(params, cfg)
    if state is None:
        state = initial_state(stack, dims or sets[0].dims(), cfg)
    for p in sets:
        p.check(state.dims)
    ops = incoming_operators(stack, cfg)
    for i in range(cfg.iterations):
        p = sets[0] if cfg.mode is Mode.RECURRENT else sets[i]
        state = hgnn_step(state, stack, p, cfg, ops)
    return state


def apply_output_head(state: FeatureState, head: OutputHead):
    x = state.layers[0] if head.target is HeadTarget.LAYER0 else state.layers[-1]
    if head.weight is None:
        return x
    w = head.weight
    if ad.value_of(w).shape[0] != ad.value_of(x).shape[1]:
        raise DimensionError(f"head expects {ad.value_of(w).shape[0]} input features, got {ad.value_of(x).shape[1]}")
    z = ad.matmul(x, w)
    if head.bias is not None:
        z = ad.add(z, head.bias)
    out = ad.nonlinearity(head.nonlinearity)(z)
    if head.normalize_rows:
        out = ad.div(out, ad.total(out, axis=1, keepdims=True))
    return out
