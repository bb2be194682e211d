"""Seeded synthetic graphs: planted nested block hierarchies and Erdos-Renyi."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .graph import Graph
from .hierarchy import Partition


@dataclass
class WeightSpec:
    """Distribution of the weight of a present edge.

    ``constant`` uses ``value``; ``poisson`` draws 1 + Poisson(mean - 1);
    ``exponential`` draws from Exp(mean); ``uniform`` from [low, high).
    ``poisson_flow`` is different: the pair probability becomes a rate and
    every ordered pair carries Poisson(mean * p) units of flow, the edge
    being present when the count is positive.
    """

    kind: str = "constant"
    value: float = 1.0
    mean: float = 1.0
    low: float = 0.0
    high: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "poisson", "exponential", "uniform", "poisson_flow"):
            raise ValidationError(f"unknown weight kind {self.kind!r}")
        if self.kind in ("poisson", "exponential", "poisson_flow") and self.mean <= 0:
            raise ValidationError("weight mean must be positive")
        if self.kind == "poisson" and self.mean < 1:
            raise ValidationError("poisson weight mean must be >= 1")

    def sample(self, rng, size) -> np.ndarray:
        if self.kind == "constant":
            return np.full(size, float(self.value))
        if self.kind == "poisson":
            return 1.0 + rng.poisson(self.mean - 1.0, size=size).astype(np.float64)
        if self.kind == "exponential":
            return rng.exponential(self.mean, size=size)
        if self.kind == "uniform":
            return rng.uniform(self.low, self.high, size=size)
        raise ValidationError(f"{self.kind!r} weights are drawn per pair, not per edge")


def _draw(prob: np.ndarray, weight: WeightSpec, rng) -> Graph:
    n = prob.shape[0]
    if weight.kind == "poisson_flow":
        counts = rng.poisson(weight.mean * prob).astype(np.float64)
        rows, cols = np.nonzero(counts)
        return Graph.from_edges(n, zip(rows, cols, counts[rows, cols]))
    present = rng.random((n, n)) < prob
    rows, cols = np.nonzero(present)
    weights = weight.sample(rng, rows.size)
    return Graph.from_edges(n, zip(rows, cols, weights))


@dataclass
class PlantedHierarchy:
    """Nested blocks: ``branching**levels`` base blocks of ``base_block_size`` nodes.

    Two nodes in the same level-k block (k = 0 is the base) connect with
    probability ``p_in[k]`` unless a finer shared block applies; nodes
    sharing no block connect with ``p_out``.
    """

    levels: int = 2
    branching: int = 2
    base_block_size: int = 4
    p_in: tuple = (0.9, 0.3)
    p_out: float = 0.02
    weight: WeightSpec = field(default_factory=WeightSpec)

    def __post_init__(self):
        self.p_in = tuple(float(p) for p in self.p_in)
        if isinstance(self.weight, dict):
            self.weight = WeightSpec(**self.weight)
        if self.levels < 1 or self.branching < 1 or self.base_block_size < 1:
            raise ValidationError("levels, branching and base_block_size must be >= 1")
        if len(self.p_in) != self.levels:
            raise ValidationError(f"p_in needs {self.levels} entries, got {len(self.p_in)}")
        for p in (*self.p_in, self.p_out):
            if not 0.0 <= p <= 1.0:
                raise ValidationError(f"probability {p} outside [0, 1]")
        if any(a <= b for a, b in zip(self.p_in, self.p_in[1:])):
            raise ValidationError("p_in must be strictly decreasing with level")

    @property
    def n(self) -> int:
        return self.base_block_size * self.branching**self.levels

    def block_labels(self, level: int) -> np.ndarray:
        """Block index of each node at ``level`` (0 = base blocks)."""
        size = self.base_block_size * self.branching**level
        return np.arange(self.n) // size

    def planted_partitions(self) -> list[Partition]:
        """C^0 (nodes -> base blocks), C^1 (base blocks -> level-1 blocks), ..."""
        parts = []
        for k in range(self.levels):
            count = self.branching ** (self.levels - k)
            if k == 0:
                labels = self.block_labels(0)
            else:
                labels = np.arange(self.branching ** (self.levels - k + 1)) // self.branching
            parts.append(Partition.from_labels(labels, count, groups=[f"L{k + 1}.{j}" for j in range(count)]))
        return parts

    def probability_matrix(self) -> np.ndarray:
        p = np.full((self.n, self.n), self.p_out)
        for k in range(self.levels - 1, -1, -1):
            lab = self.block_labels(k)
            p[lab[:, None] == lab[None, :]] = self.p_in[k]
        np.fill_diagonal(p, 0.0)
        return p

    def generate(self, seed: int) -> Graph:
        return _draw(self.probability_matrix(), self.weight, np.random.default_rng(seed))


@dataclass
class ErdosRenyi:
    n: int = 10
    p: float = 0.1
    weight: WeightSpec = field(default_factory=WeightSpec)

    def __post_init__(self):
        if isinstance(self.weight, dict):
            self.weight = WeightSpec(**self.weight)
        if self.n < 1:
            raise ValidationError("n must be >= 1")
        if not 0.0 <= self.p <= 1.0:
            raise ValidationError(f"probability {self.p} outside [0, 1]")

    def generate(self, seed: int) -> Graph:
        prob = np.full((self.n, self.n), self.p)
        np.fill_diagonal(prob, 0.0)
        return _draw(prob, self.weight, np.random.default_rng(seed))


def two_cliques(k: int = 4, bridge: float = 1.0) -> tuple[Graph, np.ndarray]:
    """Two mutual k-cliques joined by one mutual edge; returns the graph and planted labels."""
    n = 2 * k
    edges = [(i, j, 1.0) for blk in (range(k), range(k, n)) for i in blk for j in blk if i != j]
    edges += [(k - 1, k, bridge), (k, k - 1, bridge)]
    return Graph.from_edges(n, edges), np.repeat([0, 1], k)
