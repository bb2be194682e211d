"""Discrete modularity maximization and nested community hierarchies.

The search is greedy agglomeration followed by single-node reassignment
sweeps, alternated until neither improves, and restarted with seeded
randomization. Dense arithmetic throughout; fine up to a few thousand nodes.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import ValidationError
from .graph import Graph, degrees
from .hierarchy import Partition, aggregate_graph

GAIN_TOL = 1e-12


def _modularity_matrix(g: Graph) -> np.ndarray:
    if g.has_negative_weights():
        raise ValidationError("modularity requires non-negative edge weights")
    total = g.total_weight()
    if g.n == 0 or total <= 0:
        raise ValidationError("modularity requires a graph with positive total weight")
    dout, din = degrees(g, "out"), degrees(g, "in")
    return g.dense() / total - np.outer(dout, din) / total**2


def labels_modularity(b: np.ndarray, labels: np.ndarray) -> float:
    """Sum of B[i, j] over same-community pairs."""
    k = int(labels.max()) + 1
    m = np.zeros((labels.size, k))
    m[np.arange(labels.size), labels] = 1.0
    return float(np.sum(m * (b @ m)))


def _canonical(labels: np.ndarray) -> np.ndarray:
    """Renumber communities by first appearance."""
    _, first = np.unique(labels, return_index=True)
    order = np.argsort(first)
    remap = np.empty(order.size, dtype=np.int64)
    remap[order] = np.arange(order.size)
    _, inv = np.unique(labels, return_inverse=True)
    return remap[inv]


def _agglomerate(b: np.ndarray, labels: np.ndarray, rng, top_k: int) -> np.ndarray:
    """Merge communities while some merge increases modularity.

    With ``top_k > 1`` the merge is drawn uniformly from the ``top_k`` best
    improving pairs instead of always taking the best one.
    """
    labels = _canonical(labels)
    k = int(labels.max()) + 1
    m = np.zeros((labels.size, k))
    m[np.arange(labels.size), labels] = 1.0
    e = m.T @ b @ m
    es = e + e.T
    alive = np.ones(k, dtype=bool)
    owner = np.arange(k)
    while alive.sum() > 1:
        gains = es.copy()
        gains[~alive, :] = -np.inf
        gains[:, ~alive] = -np.inf
        np.fill_diagonal(gains, -np.inf)
        iu = np.triu_indices(k, 1)
        flat = gains[iu]
        if flat.size == 0 or flat.max() <= GAIN_TOL:
            break
        if top_k > 1:
            cand = np.flatnonzero(flat > GAIN_TOL)
            cand = cand[np.argsort(-flat[cand], kind="stable")][:top_k]
            pick = cand[rng.integers(cand.size)]
        else:
            pick = int(np.argmax(flat))
        c, d = iu[0][pick], iu[1][pick]
        es[c, :] += es[d, :]
        es[:, c] += es[:, d]
        alive[d] = False
        owner[owner == d] = c
    return _canonical(owner[labels])


def _reassign(b: np.ndarray, labels: np.ndarray, rng) -> np.ndarray:
    """Move single nodes to their best community (or a new one) until stable."""
    n = labels.size
    s = b + b.T
    labels = _canonical(labels).copy()
    k_cap = n + 1
    m = np.zeros((n, k_cap))
    m[np.arange(n), labels] = 1.0
    kmat = s @ m
    counts = m.sum(axis=0)
    improved = True
    while improved:
        improved = False
        for i in rng.permutation(n):
            a = labels[i]
            stay = kmat[i, a] - s[i, i]
            gains = kmat[i] - stay
            gains[a] = 0.0
            empty = np.flatnonzero(counts == 0)
            occupied = counts > 0
            gains[~occupied] = -np.inf
            if counts[a] > 1 and empty.size:
                gains[empty[0]] = -stay
            best = int(np.argmax(gains))
            if gains[best] > GAIN_TOL and best != a:
                labels[i] = best
                kmat[:, a] -= s[:, i]
                kmat[:, best] += s[:, i]
                counts[a] -= 1
                counts[best] += 1
                improved = True
    return _canonical(labels)


def _bisect(s: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Improve a +-1 split maximizing x^T S x by greedy single flips."""
    x = x.copy()
    off = s - np.diag(np.diag(s))
    while True:
        gains = -4.0 * x * (off @ x)
        i = int(np.argmax(gains))
        if gains[i] <= GAIN_TOL:
            return x
        x[i] = -x[i]


def _resplit(b: np.ndarray, labels: np.ndarray, rng) -> np.ndarray:
    """Re-split single communities and unions of community pairs in two.

    Each candidate split starts from the sign of the leading eigenvector
    and from one random assignment, refined by flips; it is accepted when
    it beats the current arrangement of those nodes.
    """
    s = b + b.T
    labels = labels.copy()
    k = int(labels.max()) + 1
    groups = [(c,) for c in range(k)] + [(c, d) for c in range(k) for d in range(c + 1, k)]
    for grp in groups:
        nodes = np.flatnonzero(np.isin(labels, grp))
        if nodes.size < 2:
            continue
        sub = s[np.ix_(nodes, nodes)]
        current = np.where(labels[nodes] == grp[0], 1.0, -1.0)
        score_now = current @ sub @ current
        _, vecs = np.linalg.eigh(sub)
        starts = [np.where(vecs[:, -1] >= 0, 1.0, -1.0), rng.choice([-1.0, 1.0], nodes.size)]
        best, best_score = None, score_now
        for x0 in starts:
            x = _bisect(sub, x0)
            sc = x @ sub @ x
            if sc > best_score + GAIN_TOL:
                best, best_score = x, sc
        if best is None:
            continue
        new_label = grp[1] if len(grp) == 2 else int(labels.max()) + 1
        labels[nodes[best > 0]] = grp[0]
        labels[nodes[best < 0]] = new_label
    return _canonical(labels)


def _local_optimum(b: np.ndarray, labels: np.ndarray, rng) -> tuple[np.ndarray, float]:
    q = labels_modularity(b, labels)
    while True:
        labels = _reassign(b, labels, rng)
        labels = _agglomerate(b, labels, rng, 1)
        labels = _resplit(b, labels, rng)
        q_new = labels_modularity(b, labels)
        if q_new <= q + GAIN_TOL:
            return labels, max(q, q_new)
        q = q_new


def _search(b: np.ndarray, rng, top_k: int, kicks: int) -> tuple[np.ndarray, float]:
    """Randomized greedy start, local optimum, then perturb-and-reoptimize kicks."""
    n = b.shape[0]
    labels = _agglomerate(b, np.arange(n), rng, top_k)
    labels, q = _local_optimum(b, labels, rng)
    for _ in range(kicks):
        trial = labels.copy()
        k = int(trial.max()) + 1
        moved = rng.choice(n, size=min(n, 1 + n // 4), replace=False)
        trial[moved] = rng.integers(0, k + 1, size=moved.size)
        trial, q_trial = _local_optimum(b, _canonical(trial), rng)
        if q_trial > q + GAIN_TOL:
            labels, q = trial, q_trial
    return labels, q


def best_labels(g: Graph, restarts: int = 8, seed: int = 0, kicks: int = 4) -> tuple[np.ndarray, float]:
    """Best community labels over ``restarts`` seeded runs, plus their modularity."""
    b = _modularity_matrix(g)
    best, best_q = None, -np.inf
    for r in range(max(1, restarts)):
        rng = np.random.default_rng([seed, r])
        labels, q = _search(b, rng, 1 if r == 0 else 3, kicks)
        q = labels_modularity(b, labels)
        # ties keep the earliest restart
        if q > best_q + GAIN_TOL:
            best, best_q = labels, q
    return best, best_q


def infer_partition_modularity(g: Graph, restarts: int = 8, seed: int = 0, prefix: str = "") -> Partition:
    labels, _ = best_labels(g, restarts, seed)
    k = int(labels.max()) + 1
    return Partition.from_labels(labels, k, groups=[f"{prefix}{j}" for j in range(k)])


def _without_self_loops(g: Graph) -> Graph:
    a = g.adjacency.tolil()
    a.setdiag(0.0)
    return Graph(g.node_ids, a.tocsr(), g.directed)


def infer_nested_hierarchy(g: Graph, levels: int, restarts: int = 8, seed: int = 0,
                           ignore_self_loops: bool = True) -> list[Partition]:
    """Nested partitions C^0..C^{levels-1}, each found on the previous aggregate.

    The modularity of a partition of an aggregate (self-loops included)
    equals the modularity of the induced partition of the finer graph, so
    once a level is optimal no coarser level can improve on it. With
    ``ignore_self_loops`` (the default) the search above the input layer
    therefore runs on the aggregate minus its diagonal, i.e. on the network
    between communities. The stack built from these partitions still uses
    the full aggregate. A level whose search graph is a single node or has
    no weight left becomes an identity, as do all levels above it.
    """
    if levels < 1:
        raise ValidationError("levels must be >= 1")
    parts: list[Partition] = []
    cur = g
    for k in range(levels):
        search = _without_self_loops(cur) if (k > 0 and ignore_self_loops) else cur
        if cur.n == 1 or (k > 0 and search.total_weight() <= 0):
            p = Partition.identity(cur.n, groups=[f"L{k + 1}.{j}" for j in range(cur.n)])
        else:
            p = infer_partition_modularity(search, restarts, seed + k, prefix=f"L{k + 1}.")
        parts.append(p)
        cur = aggregate_graph(cur, p)
    return parts


def hardened(c) -> np.ndarray:
    """Per-row argmax with lowest-index tie-break."""
    c = c.toarray() if sp.issparse(c) else np.asarray(c)
    return np.argmax(c, axis=1)
