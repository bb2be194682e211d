"""Sparse weighted graphs, degree vectors and the normalized operators used in propagation."""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, EmptyInputError, ParseError, ValidationError


class DerivativeMatrixKind(str, enum.Enum):
    RAW_ADJACENCY = "raw_adjacency"
    NORMALIZED_ADJACENCY = "normalized_adjacency"
    NORMALIZED_LAPLACIAN = "normalized_laplacian"


@dataclass(frozen=True, eq=False)
class Graph:
    """Weighted directed graph over string-labelled nodes.

    Internally everything is indexed densely: ``node_ids[i]`` is the label of
    row/column ``i`` of ``adjacency``. Instances are treated as immutable.
    """

    node_ids: tuple[str, ...]
    adjacency: sp.csr_matrix
    directed: bool = True
    _index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        a = sp.csr_matrix(self.adjacency, dtype=np.float64)
        a.sum_duplicates()
        a.eliminate_zeros()
        a.sort_indices()
        n = len(self.node_ids)
        if a.shape != (n, n):
            raise DimensionError(f"adjacency shape {a.shape} does not match {n} node ids")
        if not np.all(np.isfinite(a.data)):
            raise ValidationError("edge weights must be finite")
        if len(set(self.node_ids)) != n:
            raise ValidationError("node ids must be unique")
        if not self.directed and (abs(a - a.T) > 0).nnz:
            raise ValidationError("undirected graph requires a symmetric adjacency")
        object.__setattr__(self, "node_ids", tuple(str(x) for x in self.node_ids))
        object.__setattr__(self, "adjacency", a)
        object.__setattr__(self, "_index", {label: i for i, label in enumerate(self.node_ids)})

    @property
    def n(self) -> int:
        return len(self.node_ids)

    @property
    def num_edges(self) -> int:
        return self.adjacency.nnz

    @property
    def edges(self) -> dict[tuple[int, int], float]:
        coo = self.adjacency.tocoo()
        return {(int(i), int(j)): float(w) for i, j, w in zip(coo.row, coo.col, coo.data)}

    def index_of(self, label: str) -> int:
        return self._index[label]

    def total_weight(self) -> float:
        return float(self.adjacency.sum())

    def dense(self) -> np.ndarray:
        return self.adjacency.toarray()

    def has_negative_weights(self) -> bool:
        return bool(np.any(self.adjacency.data < 0))

    def permuted(self, perm: np.ndarray) -> "Graph":
        """Relabel so that old node ``i`` becomes new node ``perm[i]``."""
        perm = np.asarray(perm)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(len(perm))
        a = self.adjacency[inv][:, inv]
        ids = [self.node_ids[k] for k in inv]
        return Graph(tuple(ids), a, self.directed)

    @classmethod
    def from_dense(cls, matrix, node_ids=None, directed=True) -> "Graph":
        m = np.asarray(matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"adjacency must be square, got shape {m.shape}")
        if node_ids is None:
            node_ids = [str(i) for i in range(m.shape[0])]
        return cls(tuple(node_ids), sp.csr_matrix(m), directed)

    @classmethod
    def from_edges(cls, n, edges: Iterable[tuple[int, int, float]], node_ids=None, directed=True) -> "Graph":
        edges = list(edges)
        rows = [e[0] for e in edges]
        cols = [e[1] for e in edges]
        vals = [float(e[2]) for e in edges]
        a = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        if node_ids is None:
            node_ids = [str(i) for i in range(n)]
        return cls(tuple(node_ids), a, directed)

    @classmethod
    def empty(cls, n: int) -> "Graph":
        return cls(tuple(str(i) for i in range(n)), sp.csr_matrix((n, n)))


def load_edge_list(text: str | TextIO, directed: bool = True) -> Graph:
    """Parse a ``src<TAB>dst<TAB>weight`` edge list.

    Lines starting with ``#`` are comments. Duplicate (src, dst) pairs have
    their weights summed; nodes are indexed in order of first appearance.
    With ``directed=False`` every line contributes both directions.
    """
    if not isinstance(text, str):
        text = text.read()
    if text.startswith("﻿"):
        text = text[1:]
    index: dict[str, int] = {}
    rows, cols, vals = [], [], []
    seen_line = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ParseError(f"expected 3 tab-separated fields, got {len(parts)}", lineno)
        src, dst, wtxt = parts
        if not src or not dst:
            raise ParseError("empty node label", lineno)
        try:
            w = float(wtxt)
        except ValueError:
            raise ParseError(f"weight {wtxt!r} is not a number", lineno) from None
        if not math.isfinite(w):
            raise ParseError(f"weight {wtxt!r} is not finite", lineno)
        seen_line = True
        for label in (src, dst):
            if label not in index:
                index[label] = len(index)
        rows.append(index[src])
        cols.append(index[dst])
        vals.append(w)
        if not directed and src != dst:
            rows.append(index[dst])
            cols.append(index[src])
            vals.append(w)
    if not seen_line:
        raise EmptyInputError("edge list contains no edges")
    n = len(index)
    # coo -> csr sums duplicates
    a = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    a.sum_duplicates()
    return Graph(tuple(index), a, directed)


def write_edge_list(g: Graph, out: TextIO | None = None) -> str:
    """Serialize in row-major index order; weights use ``repr`` so they round-trip."""
    buf = io.StringIO()
    coo = g.adjacency.tocoo()
    order = np.lexsort((coo.col, coo.row))
    for k in order:
        buf.write(f"{g.node_ids[coo.row[k]]}\t{g.node_ids[coo.col[k]]}\t{float(coo.data[k])!r}\n")
    text = buf.getvalue()
    if out is not None:
        out.write(text)
    return text


def degrees(g: Graph, direction: str = "out") -> np.ndarray:
    if direction == "out":
        return np.asarray(g.adjacency.sum(axis=1)).ravel()
    if direction == "in":
        return np.asarray(g.adjacency.sum(axis=0)).ravel()
    raise ValidationError(f"direction must be 'out' or 'in', got {direction!r}")


def _inv_sqrt(d: np.ndarray) -> np.ndarray:
    out = np.zeros_like(d)
    pos = d > 0
    out[pos] = 1.0 / np.sqrt(d[pos])
    return out


def derivative_matrix(g: Graph, kind=DerivativeMatrixKind.NORMALIZED_ADJACENCY, degree=("out", "out")) -> sp.csr_matrix:
    """Return A, D^-1/2 A D^-1/2 or D^-1/2 (D - A) D^-1/2.

    ``degree`` names the degree vector used on the left and right side; a
    single string uses the same one on both. Zero-degree nodes get a zero
    D^-1/2 entry, so their rows and columns vanish.
    """
    kind = DerivativeMatrixKind(kind)
    a = g.adjacency
    if kind is DerivativeMatrixKind.RAW_ADJACENCY:
        return a.copy()
    if isinstance(degree, str):
        degree = (degree, degree)
    left = _inv_sqrt(degrees(g, degree[0]))
    right = _inv_sqrt(degrees(g, degree[1]))
    if kind is DerivativeMatrixKind.NORMALIZED_ADJACENCY:
        m = sp.diags(left) @ a @ sp.diags(right)
    else:
        # D on the diagonal uses the left-side degree
        d = degrees(g, degree[0])
        m = sp.diags(left) @ (sp.diags(d) - a) @ sp.diags(right)
    m = sp.csr_matrix(m)
    m.eliminate_zeros()
    m.sort_indices()
    return m


def default_node_weights(g: Graph, floor: float = 1e-9) -> np.ndarray:
    """Weighted in-degree, floored so isolated nodes keep a positive weight."""
    v = degrees(g, "in")
    return np.maximum(v, floor)
