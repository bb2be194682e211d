"""JSON config schemas for the command-line runs.

Each config is a dataclass; :func:`from_dict` builds one from parsed JSON,
rejecting unknown keys and wrongly typed values with a :class:`ConfigError`
that names the offending field path (``config.training.steps`` and so on).
"""

from __future__ import annotations

import dataclasses
import enum
import json
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, HGNNError
from .synthetic import ErdosRenyi, PlantedHierarchy, WeightSpec

__all__ = [
    "from_dict",
    "to_dict",
    "load_config",
    "GenerateConfig",
    "EmbedConfig",
    "TrainRunConfig",
    "CommunitiesConfig",
    "CompareConfig",
]


def _is_dataclass_type(tp) -> bool:
    return isinstance(tp, type) and dataclasses.is_dataclass(tp)


def _coerce(tp, value, path: str):
    if tp is typing.Any or tp is object:
        return value
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = typing.get_args(tp)
        if value is None and type(None) in args:
            return None
        errors = []
        for arg in args:
            if arg is type(None):
                continue
            try:
                return _coerce(arg, value, path)
            except ConfigError as exc:
                errors.append(exc.msg)
        raise ConfigError(path, "; ".join(errors) or "value not allowed")
    if origin in (list, tuple) or tp in (list, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(path, f"expected a list, got {type(value).__name__}")
        args = typing.get_args(tp)
        inner = args[0] if args else typing.Any
        items = [_coerce(inner, v, f"{path}[{i}]") for i, v in enumerate(value)]
        return tuple(items) if (origin or tp) is tuple else items
    if origin is dict or tp is dict:
        if not isinstance(value, dict):
            raise ConfigError(path, f"expected an object, got {type(value).__name__}")
        return dict(value)
    if _is_dataclass_type(tp):
        return from_dict(tp, value, path)
    if isinstance(tp, type) and issubclass(tp, enum.Enum):
        try:
            return tp(value)
        except ValueError:
            allowed = ", ".join(m.value for m in tp)
            raise ConfigError(path, f"{value!r} is not one of {allowed}") from None
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    return value


def from_dict(cls, data, path: str = "config"):
    """Build dataclass ``cls`` from a JSON object, validating every field."""
    if not isinstance(data, dict):
        raise ConfigError(path, f"expected an object, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = [f.name for f in dataclasses.fields(cls) if f.init]
    for key in data:
        if key not in names:
            raise ConfigError(f"{path}.{key}", f"unknown field (allowed: {', '.join(names)})")
    kwargs = {k: _coerce(hints.get(k, typing.Any), v, f"{path}.{k}") for k, v in data.items()}
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        raise ConfigError(f"{path}.{exc.path}", exc.msg) from None
    except (HGNNError, ValueError, TypeError) as exc:
        raise ConfigError(path, str(exc)) from None


def to_dict(obj):
    """Plain JSON-ready echo of a config dataclass."""
    if dataclasses.is_dataclass(obj):
        return {f.name: to_dict(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, (list, tuple)):
        return [to_dict(v) for v in obj]
    if isinstance(obj, dict):
        return {k: to_dict(v) for k, v in obj.items()}
    return obj


def load_config(cls, path):
    """Read JSON at ``path`` (or return defaults when ``path`` is None)."""
    if path is None:
        return from_dict(cls, {})
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return from_dict(cls, data)


# run configs --------------------------------------------------------------

@dataclass
class GenerateConfig:
    """Synthetic graph spec; only the block matching ``generator`` is used."""

    generator: str = "planted_hierarchy"
    planted_hierarchy: PlantedHierarchy = field(default_factory=PlantedHierarchy)
    erdos_renyi: ErdosRenyi = field(default_factory=ErdosRenyi)

    def __post_init__(self):
        if self.generator not in ("planted_hierarchy", "erdos_renyi"):
            raise ConfigError("generator", f"unknown generator {self.generator!r}")

    @property
    def model(self):
        return self.planted_hierarchy if self.generator == "planted_hierarchy" else self.erdos_renyi


@dataclass
class HierarchySource:
    """Where the layer stack comes from: inferred by modularity, or read from partition files."""

    levels: int = 2
    scheme: str = "additive"
    restarts: int = 8
    partitions: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.levels < 0:
            raise ConfigError("levels", "must be >= 0")
        if self.scheme not in ("averaging", "additive"):
            raise ConfigError("scheme", f"unknown scheme {self.scheme!r}")
        if self.restarts < 1:
            raise ConfigError("restarts", "must be >= 1")


@dataclass
class EmbedConfig:
    """``flat``: one rank-``dims[0]`` factorization. ``hierarchical``: one rank per layer, input layer first."""

    pipeline: str = "flat"
    dims: list[int] = field(default_factory=lambda: [8])
    model: str = "gaussian_fixed_sigma"
    fixed_sigma: float = 1.0
    hierarchy: HierarchySource = field(default_factory=HierarchySource)

    def __post_init__(self):
        if self.pipeline not in ("flat", "hierarchical"):
            raise ConfigError("pipeline", f"unknown pipeline {self.pipeline!r}")
        if not self.dims or any(d < 0 for d in self.dims):
            raise ConfigError("dims", "needs non-negative entries")
        if self.pipeline == "flat" and (len(self.dims) != 1 or self.dims[0] < 1):
            raise ConfigError("dims", "flat pipeline takes a single positive rank")
        if self.model != "gaussian_fixed_sigma":
            raise ConfigError("model", "spectral embedding supports gaussian_fixed_sigma only")
        if self.fixed_sigma <= 0:
            raise ConfigError("fixed_sigma", "must be positive")


@dataclass
class PropagationSection:
    iterations: int = 1
    mode: str = "recurrent"
    derivative_kind: str = "normalized_adjacency"
    nonlinearity: str = "tanh"
    mlp_hidden: int = 0
    init: str = "uniform"
    init_range: float = 0.1


@dataclass
class TrainingSection:
    method: str = "grad"
    steps: int = 100
    learning_rate: float = 0.01
    lr_decay: float = 1.0
    momentum: float = 0.0
    clip_norm: float = 10.0
    population: int = 32
    noise: float = 0.1
    noise_decay: float = 0.99
    elite_fraction: float = 0.25
    tolerance: float = 0.0
    freeze: list[str] = field(default_factory=lambda: ["features"])


@dataclass
class TrainRunConfig:
    """Train an HGNN on one graph against one objective.

    ``objective`` is ``embedding_likelihood`` (fixed-sigma Gaussian or
    Bernoulli, per ``edge_model``), ``squared_error`` or ``modularity``.
    ``dims`` gives the feature width per layer (one entry reused for all).
    """

    objective: str = "squared_error"
    edge_model: str = "gaussian_fixed_sigma"
    dims: list[int] = field(default_factory=lambda: [4])
    groups: int = 2
    hierarchy: HierarchySource = field(default_factory=lambda: HierarchySource(levels=0))
    propagation: PropagationSection = field(default_factory=PropagationSection)
    training: TrainingSection = field(default_factory=TrainingSection)

    def __post_init__(self):
        if self.objective not in ("embedding_likelihood", "squared_error", "modularity"):
            raise ConfigError("objective", f"unknown objective {self.objective!r}")
        if self.edge_model not in ("gaussian_fixed_sigma", "gaussian", "bernoulli"):
            raise ConfigError("edge_model", f"unknown edge model {self.edge_model!r}")
        if not self.dims or any(d < 1 for d in self.dims):
            raise ConfigError("dims", "feature widths must be >= 1")
        if self.objective != "modularity" and any(d % 2 for d in self.dims):
            raise ConfigError("dims", "embedding objectives split features into (l, r) halves; widths must be even")
        if self.groups < 1:
            raise ConfigError("groups", "must be >= 1")


@dataclass
class CommunitiesConfig:
    """Settings for both community methods; ``hgnn_soft`` defaults recover the two-clique split."""

    restarts: int = 8
    groups: int = 2
    dim: int = 8
    iterations: int = 3
    nonlinearity: str = "tanh"
    derivative_kind: str = "normalized_adjacency"
    init_range: float = 1.0
    learning_rate: float = 0.1
    momentum: float = 0.9
    steps: int = 300

    def __post_init__(self):
        for name in ("restarts", "groups", "dim", "iterations"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name}", "must be >= 1")


@dataclass
class CompareConfig:
    """Flat-versus-hierarchical grid on planted hierarchies.

    Replica r is the observed graph drawn with seed ``seed + r``. The
    hierarchy is inferred once from a separate history draw (seed
    ``seed + history_offset``) or taken as planted, and every grid point
    is evaluated on the same replicas.
    """

    synthetic: PlantedHierarchy = field(default_factory=lambda: PlantedHierarchy(
        levels=2, branching=4, base_block_size=16, p_in=(0.9, 0.06), p_out=0.005,
        weight=WeightSpec(kind="poisson_flow", mean=50.0)))
    replicas: int = 20
    flat_dims: list[int] = field(default_factory=lambda: [2, 4, 8, 16])
    hierarchical_ranks: list[list[int]] = field(default_factory=lambda: [[1, 16, 0], [2, 16, 4]])
    hierarchy: str = "inferred"
    scheme: str = "additive"
    restarts: int = 8
    history_offset: int = 1_000_000

    def __post_init__(self):
        if self.replicas < 1:
            raise ConfigError("replicas", "must be >= 1")
        if self.hierarchy not in ("inferred", "planted"):
            raise ConfigError("hierarchy", f"unknown hierarchy source {self.hierarchy!r}")
        if any(d < 1 for d in self.flat_dims):
            raise ConfigError("flat_dims", "ranks must be >= 1")
        for i, ranks in enumerate(self.hierarchical_ranks):
            if len(ranks) != self.synthetic.levels + 1 or any(r < 0 for r in ranks):
                raise ConfigError(f"hierarchical_ranks[{i}]",
                                  f"needs {self.synthetic.levels + 1} non-negative ranks (input layer first)")
