"""Hidden-layer hierarchy: partitions, coarsened layers and inter-layer operators.

Every inter-layer operator is stored with (source node, target node)
indexing, so moving features from one layer to another is
``op.T @ X`` where ``X`` has one row per source node.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, ValidationError
from .graph import Graph, default_node_weights

ROW_SUM_TOL = 1e-12


class InterLayerScheme(str, enum.Enum):
    AVERAGING = "averaging"
    ADDITIVE = "additive"


class PartitionKind(str, enum.Enum):
    DISCRETE = "discrete"
    PROBABILISTIC = "probabilistic"


@dataclass(frozen=True, eq=False)
class Partition:
    """Row-stochastic attachment of ``rows`` fine nodes to ``cols`` coarse nodes."""

    matrix: sp.csr_matrix
    kind: PartitionKind = PartitionKind.PROBABILISTIC
    groups: tuple[str, ...] | None = None
    validate: bool = True

    def __post_init__(self):
        c = sp.csr_matrix(self.matrix, dtype=np.float64)
        c.eliminate_zeros()
        c.sort_indices()
        object.__setattr__(self, "matrix", c)
        object.__setattr__(self, "kind", PartitionKind(self.kind))
        groups = self.groups
        if groups is None:
            groups = tuple(str(j) for j in range(c.shape[1]))
        groups = tuple(str(x) for x in groups)
        if len(groups) != c.shape[1]:
            raise DimensionError(f"{len(groups)} group labels for {c.shape[1]} columns")
        object.__setattr__(self, "groups", groups)
        if self.validate:
            self.check()

    def check(self):
        c = self.matrix
        if c.nnz and (np.min(c.data) < 0 or not np.all(np.isfinite(c.data))):
            raise ValidationError("partition entries must be finite and non-negative")
        rows = np.asarray(c.sum(axis=1)).ravel()
        bad = np.flatnonzero(np.abs(rows - 1.0) > ROW_SUM_TOL)
        if bad.size:
            raise ValidationError(f"partition row {bad[0]} sums to {rows[bad[0]]!r}, not 1")
        if self.kind is PartitionKind.DISCRETE:
            per_row = np.diff(c.indptr)
            if np.any(per_row != 1) or np.any(c.data != 1.0):
                raise ValidationError("discrete partition rows must be one-hot")
        empty = np.flatnonzero(np.asarray((c != 0).sum(axis=0)).ravel() == 0)
        if empty.size:
            raise ValidationError(f"coarse node {empty[0]} has no attachments")

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    @property
    def rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def cols(self) -> int:
        return self.matrix.shape[1]

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def labels(self) -> np.ndarray:
        """Group index per fine node (argmax, lowest index on ties)."""
        return np.asarray(self.dense().argmax(axis=1)).ravel()

    @classmethod
    def from_labels(cls, labels: Sequence[int], n_groups: int | None = None, groups=None) -> "Partition":
        labels = np.asarray(labels, dtype=np.int64)
        if n_groups is None:
            n_groups = int(labels.max()) + 1 if labels.size else 0
        m = sp.csr_matrix((np.ones(labels.size), (np.arange(labels.size), labels)), shape=(labels.size, n_groups))
        return cls(m, PartitionKind.DISCRETE, groups)

    @classmethod
    def identity(cls, n: int, groups=None) -> "Partition":
        return cls(sp.identity(n, format="csr"), PartitionKind.DISCRETE, groups)

    @classmethod
    def from_dense(cls, matrix, kind=None, groups=None, validate=True) -> "Partition":
        m = np.asarray(matrix, dtype=np.float64)
        if kind is None:
            one_hot = np.all((m == 0) | (m == 1)) and np.all((m != 0).sum(axis=1) == 1)
            kind = PartitionKind.DISCRETE if one_hot else PartitionKind.PROBABILISTIC
        return cls(sp.csr_matrix(m), kind, groups, validate)


def aggregate_graph(g: Graph, c: Partition) -> Graph:
    """Coarsen ``g`` to C^T A C; coarse nodes take the partition's group labels."""
    if c.rows != g.n:
        raise DimensionError(f"partition has {c.rows} rows, graph has {g.n} nodes")
    a = c.matrix.T @ g.adjacency @ c.matrix
    return Graph(c.groups, sp.csr_matrix(a), g.directed)


def aggregate_weights(v, c: Partition) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (c.rows,):
        raise DimensionError(f"weight vector of length {v.shape} for partition with {c.rows} rows")
    return np.asarray(c.matrix.T @ v).ravel()


def _weighted_fraction(c: Partition, v: np.ndarray) -> sp.csr_matrix:
    """F[i, J] = C[i, J] v[i] / sum_k C[k, J] v[k]."""
    cv = sp.diags(v) @ c.matrix
    col = np.asarray(cv.sum(axis=0)).ravel()
    if np.any(col <= 0):
        raise ValidationError(f"coarse node {int(np.argmin(col))} has zero attached weight")
    return sp.csr_matrix(cv @ sp.diags(1.0 / col))


def interlayer_ops(c: Partition, v, scheme=InterLayerScheme.AVERAGING) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Return (H_up, H_down) between a layer and the one above it.

    H_up is |fine| x |coarse|, H_down is |coarse| x |fine|. Averaging makes
    both column-stochastic (targets receive convex combinations); Additive
    makes both row-stochastic (sources distribute their mass).
    """
    scheme = InterLayerScheme(scheme)
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (c.rows,):
        raise DimensionError(f"weight vector of length {v.shape} for partition with {c.rows} rows")
    if np.any(v <= 0):
        raise ValidationError("node weights must be strictly positive")
    frac = _weighted_fraction(c, v)
    plain = c.matrix
    if scheme is InterLayerScheme.AVERAGING:
        up, down = frac, plain.T
    else:
        up, down = plain, frac.T
    return sp.csr_matrix(up), sp.csr_matrix(down)


@dataclass(frozen=True, eq=False)
class LayerStack:
    """Layers ``graphs[h]`` with node weights ``weights[h]`` for h = 0..top.

    ``up_ops[h]`` is H^{h->h+1} and ``down_ops[h]`` is H^{h+1->h}.
    """

    graphs: tuple[Graph, ...]
    weights: tuple[np.ndarray, ...]
    partitions: tuple[Partition, ...]
    up_ops: tuple[sp.csr_matrix, ...]
    down_ops: tuple[sp.csr_matrix, ...]
    scheme: InterLayerScheme

    @property
    def depth(self) -> int:
        """Index of the top layer (0 when there are no hidden layers)."""
        return len(self.graphs) - 1

    @property
    def sizes(self) -> list[int]:
        return [g.n for g in self.graphs]

    def __len__(self):
        return len(self.graphs)

    def incoming_from_below(self, h: int):
        """H^{h-1->h}, or None at the input layer."""
        return self.up_ops[h - 1] if h > 0 else None

    def incoming_from_above(self, h: int):
        """H^{h+1->h}, or None at the top layer."""
        return self.down_ops[h] if h < self.depth else None

    def permuted(self, perm) -> "LayerStack":
        """Same hierarchy with the input-layer nodes relabelled by ``perm``."""
        perm = np.asarray(perm)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(len(perm))
        parts = list(self.partitions)
        if parts:
            p0 = parts[0]
            parts[0] = Partition(p0.matrix[inv], p0.kind, p0.groups)
        return build_layer_stack(self.graphs[0].permuted(perm), self.weights[0][inv], parts, self.scheme)


def build_layer_stack(g: Graph, v0=None, partitions: Sequence[Partition] = (), scheme=InterLayerScheme.AVERAGING) -> LayerStack:
    scheme = InterLayerScheme(scheme)
    v = default_node_weights(g) if v0 is None else np.asarray(v0, dtype=np.float64)
    if v.shape != (g.n,):
        raise DimensionError(f"level 0: node weights of length {v.shape[0]} for {g.n} nodes")
    if np.any(v <= 0):
        raise ValidationError("level 0: node weights must be strictly positive")
    graphs, weights, ups, downs = [g], [v], [], []
    for h, c in enumerate(partitions):
        cur = graphs[-1]
        if c.rows != cur.n:
            raise DimensionError(f"level {h}: partition has {c.rows} rows but layer has {cur.n} nodes")
        up, down = interlayer_ops(c, weights[-1], scheme)
        ups.append(up)
        downs.append(down)
        graphs.append(aggregate_graph(cur, c))
        weights.append(aggregate_weights(weights[-1], c))
    return LayerStack(tuple(graphs), tuple(weights), tuple(partitions), tuple(ups), tuple(downs), scheme)


def compose_down(stack: LayerStack, h: int) -> sp.csr_matrix:
    """H^{h->0} = H^{h->h-1} @ ... @ H^{1->0}, shape |L^h| x |L^0|."""
    if not 1 <= h <= stack.depth:
        raise ValidationError(f"level {h} outside 1..{stack.depth}")
    m = stack.down_ops[h - 1]
    for k in range(h - 2, -1, -1):
        m = m @ stack.down_ops[k]
    return sp.csr_matrix(m)


def compose_partitions(partitions: Sequence[Partition]) -> Partition:
    """Collapse a chain C^0 C^1 ... into one partition from layer 0 to the top."""
    m = partitions[0].matrix
    for c in partitions[1:]:
        m = m @ c.matrix
    kind = PartitionKind.DISCRETE if all(c.kind is PartitionKind.DISCRETE for c in partitions) else PartitionKind.PROBABILISTIC
    return Partition(sp.csr_matrix(m), kind, partitions[-1].groups)
