"""Parameter fitting by reverse-mode gradients or a Gaussian evolution strategy."""

from __future__ import annotations

import copy
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from .embedding import AssemblyRule, assemble_hierarchical_embedding
from .errors import DivergenceError, NumericError, ValidationError
from .graph import Graph
from .hierarchy import LayerStack
from .objectives import (
    EdgeModel,
    PairSet,
    classification_accuracy,
    log_likelihood,
    modularity,
    node_label_loss,
    squared_error_objective,
)
from .propagation import ActivationParams, FeatureState, HeadTarget, OutputHead, PropagationConfig, apply_output_head, initial_state, run

log = logging.getLogger(__name__)

GROUPS = ("activation", "head", "edge_model", "features", "assembly")


@dataclass
class ModelParams:
    """Everything trainable: activation sets, output head, edge model, initial features, assembly weights."""

    activation: list
    head: OutputHead | None = None
    edge_model: EdgeModel | None = None
    features: list | None = None
    assembly: AssemblyRule | None = None

    def __post_init__(self):
        if isinstance(self.activation, ActivationParams):
            self.activation = [self.activation]

    def named_arrays(self) -> dict:
        out = {}
        for s, ap in enumerate(self.activation):
            for h, blk in enumerate(ap.layers):
                for k, v in blk.items():
                    out[f"activation.{s}.{h}.{k}"] = v
        if self.head is not None and self.head.weight is not None:
            out["head.weight"] = self.head.weight
            if self.head.bias is not None:
                out["head.bias"] = self.head.bias
        if self.edge_model is not None:
            for k, v in self.edge_model.named_arrays():
                out[f"edge_model.{k}"] = v
        if self.features is not None:
            for h, x in enumerate(self.features):
                out[f"features.{h}"] = x
        if self.assembly is not None:
            for k, v in self.assembly.weights.items():
                out[f"assembly.{k}"] = v
        return out

    def with_arrays(self, arrays: dict) -> "ModelParams":
        """Copy with the named arrays replaced (values may be tensors)."""
        acts = []
        for s, ap in enumerate(self.activation):
            layers = [{k: arrays.get(f"activation.{s}.{h}.{k}", v) for k, v in blk.items()} for h, blk in enumerate(ap.layers)]
            acts.append(ActivationParams(layers, ap.nonlinearity, ap.mlp_hidden))
        head = self.head
        if head is not None and head.weight is not None:
            head = OutputHead(head.target, arrays.get("head.weight", head.weight), arrays.get("head.bias", head.bias),
                              head.nonlinearity, head.normalize_rows)
        em = None
        if self.edge_model is not None:
            em = self.edge_model.with_arrays({k[len("edge_model."):]: v for k, v in arrays.items() if k.startswith("edge_model.")})
        feats = None
        if self.features is not None:
            feats = [arrays.get(f"features.{h}", x) for h, x in enumerate(self.features)]
        asm = self.assembly
        if asm is not None:
            asm = AssemblyRule(asm.theta, asm.levels, {k: arrays.get(f"assembly.{k}", v) for k, v in asm.weights.items()})
        return ModelParams(acts, head, em, feats, asm)

    def copy(self) -> "ModelParams":
        return self.with_arrays({k: np.array(v, copy=True) for k, v in self.named_arrays().items()})


def forward(params: ModelParams, stack: LayerStack, cfg: PropagationConfig) -> FeatureState:
    dims = params.activation[0].dims()
    if params.features is not None:
        state = FeatureState(list(params.features), 0)
        state.check(stack)
    else:
        state = initial_state(stack, dims, cfg)
    return run(stack, params.activation, cfg, state)


# objectives ---------------------------------------------------------------

@dataclass
class EmbeddingLikelihood:
    """Maximize the edge-model log-likelihood of the assembled (l, r) embedding."""

    graph: Graph
    pairs: PairSet = field(default_factory=PairSet)
    rule: AssemblyRule | None = None
    sense = "max"
    differentiable = True

    def evaluate(self, params: ModelParams, stack, cfg):
        if params.edge_model is None:
            raise ValidationError("embedding likelihood needs an edge model in the parameters")
        state = forward(params, stack, cfg)
        e = assemble_hierarchical_embedding(state, stack, params.assembly or self.rule, params.edge_model)
        return log_likelihood(self.graph, e.l, e.r, params.edge_model, self.pairs)


@dataclass
class SquaredError:
    """Minimize sum (w - l.r)^2 of the assembled embedding."""

    graph: Graph
    pairs: PairSet = field(default_factory=PairSet)
    rule: AssemblyRule | None = None
    sense = "min"
    differentiable = True

    def evaluate(self, params: ModelParams, stack, cfg):
        state = forward(params, stack, cfg)
        e = assemble_hierarchical_embedding(state, stack, params.assembly or self.rule)
        mu = None
        if params.edge_model is not None:
            mu = params.edge_model.location
        return squared_error_objective(self.graph, e.l, e.r, mu, self.pairs)


@dataclass
class SoftModularity:
    """Maximize modularity of the head's row-normalized soft community assignment."""

    graph: Graph
    sense = "max"
    differentiable = True

    def assignment(self, params: ModelParams, stack, cfg):
        if params.head is None:
            raise ValidationError("soft modularity needs an output head")
        return apply_output_head(forward(params, stack, cfg), params.head)

    def evaluate(self, params: ModelParams, stack, cfg):
        return modularity(self.graph, self.assignment(params, stack, cfg))


@dataclass
class NodeLabels:
    """Minimize MSE or BCE between head outputs on the input layer and known labels."""

    truth: np.ndarray
    kind: str = "mse"
    sense = "min"
    differentiable = True

    def evaluate(self, params: ModelParams, stack, cfg):
        if params.head is None:
            raise ValidationError("node labelling needs an output head")
        pred = apply_output_head(forward(params, stack, cfg), params.head)
        return node_label_loss(pred, self.truth, self.kind)


@dataclass
class NetworkClassification:
    """Accuracy of whole-network labels read from the top layer (argmax of the mean head output)."""

    stacks: list
    labels: list
    sense = "max"
    differentiable = False

    def predict(self, params: ModelParams, cfg) -> list[int]:
        if params.head is None or params.head.target is not HeadTarget.TOP:
            raise ValidationError("network classification needs a top-layer output head")
        out = []
        for st in self.stacks:
            scores = ad.value_of(apply_output_head(forward(params, st, cfg), params.head))
            out.append(int(np.argmax(np.asarray(scores).mean(axis=0))))
        return out

    def evaluate(self, params: ModelParams, stack, cfg):
        return classification_accuracy(self.predict(params, cfg), self.labels)


@dataclass
class CustomObjective:
    fn: Callable
    sense: str = "min"
    differentiable: bool = True

    def evaluate(self, params: ModelParams, stack, cfg):
        return self.fn(params, stack, cfg)


# training -----------------------------------------------------------------

@dataclass
class TrainConfig:
    method: str = "grad"  # grad | evolution
    steps: int = 100
    learning_rate: float = 0.01
    lr_decay: float = 1.0
    momentum: float = 0.0
    clip_norm: float = 10.0
    population: int = 32
    noise: float = 0.1
    noise_decay: float = 0.99
    elite_fraction: float = 0.25
    seed: int = 0
    tolerance: float = 0.0
    freeze: tuple = ("features",)

    def __post_init__(self):
        if self.method not in ("grad", "evolution"):
            raise ValidationError(f"unknown method {self.method!r}")
        if self.steps < 0 or self.population < 1:
            raise ValidationError("steps must be >= 0 and population >= 1")
        if self.learning_rate <= 0 or self.noise <= 0 or self.clip_norm <= 0:
            raise ValidationError("learning rate, noise and clip norm must be positive")
        if not 0 < self.lr_decay <= 1 or not 0 < self.noise_decay <= 1:
            raise ValidationError("decay factors must lie in (0, 1]")
        if not 0 < self.elite_fraction <= 1:
            raise ValidationError("elite fraction must lie in (0, 1]")
        if not 0 <= self.momentum < 1:
            raise ValidationError("momentum must lie in [0, 1)")
        if self.tolerance < 0:
            raise ValidationError("tolerance must be >= 0")
        unknown = set(self.freeze) - set(GROUPS)
        if unknown:
            raise ValidationError(f"unknown parameter groups {sorted(unknown)}")
        self.freeze = tuple(self.freeze)


@dataclass
class TrainReport:
    trace: list = field(default_factory=list)
    final_objective: float = float("nan")
    converged: bool = False
    wall_time: float = 0.0


class _Flat:
    """Trainable arrays flattened into one vector, in a fixed key order."""

    def __init__(self, params: ModelParams, freeze):
        self.params = params
        arrays = params.named_arrays()
        self.keys = [k for k in arrays if k.split(".")[0] not in freeze]
        self.shapes = [np.shape(arrays[k]) for k in self.keys]
        self.sizes = [int(np.prod(s)) for s in self.shapes]
        self.x0 = np.concatenate([np.ravel(arrays[k]).astype(np.float64) for k in self.keys]) if self.keys else np.zeros(0)

    def unflatten(self, x) -> dict:
        out, pos = {}, 0
        for k, shape, size in zip(self.keys, self.shapes, self.sizes):
            out[k] = np.asarray(x[pos:pos + size]).reshape(shape)
            pos += size
        return out

    def build(self, x) -> ModelParams:
        return self.params.with_arrays(self.unflatten(x))


def _loss_fn(objective, stack, cfg, flat: _Flat):
    sign = -1.0 if objective.sense == "max" else 1.0

    def value(x) -> float:
        try:
            v = float(ad.value_of(objective.evaluate(flat.build(x), stack, cfg)))
        except NumericError:
            return math.inf
        return sign * v if math.isfinite(v) else math.inf

    def value_and_grad(x):
        leaves = {k: ad.leaf(v, name=k) for k, v in flat.unflatten(x).items()}
        out = objective.evaluate(flat.params.with_arrays(leaves), stack, cfg)
        if not isinstance(out, ad.Tensor):
            return sign * float(out), np.zeros_like(x)
        out.backward()
        g = np.concatenate([
            np.zeros(size) if leaves[k].grad is None else np.ravel(leaves[k].grad)
            for k, size in zip(flat.keys, flat.sizes)
        ]) if flat.keys else np.zeros(0)
        return sign * float(out.value), sign * g

    return value, value_and_grad, sign


def train(stack: LayerStack, params: ModelParams, cfg: PropagationConfig, objective, tcfg: TrainConfig | None = None):
    """Fit the non-frozen parameter groups; returns (best params, report).

    The returned parameters are the best seen, so the objective is never
    worse than at the start. The trace holds the objective (in its own
    orientation) once per step.
    """
    tcfg = tcfg or TrainConfig()
    if tcfg.method == "grad" and not objective.differentiable:
        raise ValidationError(f"{type(objective).__name__} is not differentiable; use method='evolution'")
    start = time.perf_counter()
    flat = _Flat(params, tcfg.freeze)
    value, value_and_grad, sign = _loss_fn(objective, stack, cfg, flat)
    report = TrainReport()
    if tcfg.steps == 0 or flat.x0.size == 0:
        report.final_objective = sign * value(flat.x0)
        report.wall_time = time.perf_counter() - start
        return params, report
    if tcfg.method == "grad":
        best_x, best = _gradient(flat.x0, value, value_and_grad, tcfg, report, sign)
    else:
        best_x, best = _evolution(flat.x0, value, tcfg, report, sign)
    report.final_objective = sign * best
    report.wall_time = time.perf_counter() - start
    return flat.build(best_x), report


def _gradient(x0, value, value_and_grad, tcfg: TrainConfig, report: TrainReport, sign):
    x = x0.copy()
    vel = np.zeros_like(x)
    best_x, best = x.copy(), math.inf
    prev = None
    lr = tcfg.learning_rate
    for _ in range(tcfg.steps):
        try:
            loss, g = value_and_grad(x)
        except NumericError:
            loss, g = math.inf, None
        if not math.isfinite(loss) or g is None or not np.all(np.isfinite(g)):
            err = DivergenceError(f"objective became non-finite after {len(report.trace)} steps")
            err.last_finite = best_x
            err.report = report
            raise err
        report.trace.append(sign * loss)
        if loss < best:
            best_x, best = x.copy(), loss
        if prev is not None and abs(prev - loss) <= tcfg.tolerance:
            report.converged = True
            break
        prev = loss
        norm = float(np.linalg.norm(g))
        if norm > tcfg.clip_norm:
            g = g * (tcfg.clip_norm / norm)
        vel = tcfg.momentum * vel - lr * g
        x = x + vel
        lr *= tcfg.lr_decay
    if not report.converged:
        final = value(x)
        if final < best:
            best_x, best = x.copy(), final
    return best_x, best


def _evolution(x0, value, tcfg: TrainConfig, report: TrainReport, sign):
    """(mu, lambda) Gaussian perturbation around a mean, with the best-ever point kept in the selection pool."""
    rng = np.random.default_rng(tcfg.seed)
    mean = x0.copy()
    best_x, best = x0.copy(), value(x0)
    sigma = tcfg.noise
    n_elite = max(1, int(math.ceil(tcfg.elite_fraction * tcfg.population)))
    prev = None
    for _ in range(tcfg.steps):
        cands = mean + sigma * rng.standard_normal((tcfg.population, mean.size))
        fitness = np.array([value(c) for c in cands])
        pool = np.vstack([cands, best_x[None, :]])
        pool_fit = np.append(fitness, best)
        order = np.argsort(pool_fit, kind="stable")
        elites = pool[order[:n_elite]]
        mean = elites.mean(axis=0)
        if pool_fit[order[0]] < best:
            best_x, best = pool[order[0]].copy(), float(pool_fit[order[0]])
        report.trace.append(sign * best)
        if prev is not None and tcfg.tolerance > 0 and abs(prev - best) <= tcfg.tolerance:
            report.converged = True
            break
        prev = best
        sigma *= tcfg.noise_decay
    m = value(mean)
    if m < best:
        best_x, best = mean.copy(), m
    return best_x, best


def gradient_check(stack: LayerStack, params: ModelParams, cfg: PropagationConfig, objective, probes: int = 20,
                   seed: int = 0, step: float = 1e-5, freeze=()) -> float:
    """Max |g_reverse - g_central| / max(1, |g_central|) over random coordinates."""
    flat = _Flat(params, freeze)
    _, value_and_grad, _ = _loss_fn(objective, stack, cfg, flat)
    x = flat.x0
    _, g = value_and_grad(x)
    rng = np.random.default_rng(seed)
    coords = rng.choice(x.size, size=min(probes, x.size), replace=False)

    def raw(xv):
        return float(ad.value_of(objective.evaluate(flat.build(xv), stack, cfg)))

    sign = -1.0 if objective.sense == "max" else 1.0
    worst = 0.0
    for i in coords:
        xp, xm = x.copy(), x.copy()
        xp[i] += step
        xm[i] -= step
        fd = sign * (raw(xp) - raw(xm)) / (2 * step)
        worst = max(worst, abs(g[i] - fd) / max(1.0, abs(fd)))
    return worst
