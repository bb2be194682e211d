"""Paired (l, r) node embeddings: SVD baseline, hierarchical assembly, reconstruction."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .errors import DimensionError, NonConvergenceError, ValidationError
from .graph import Graph
from .hierarchy import LayerStack, compose_down
from .objectives import EdgeModel, EdgeModelKind, PairSet, nmse, pair_weights
from .propagation import FeatureState


class Provenance(str, enum.Enum):
    SVD_BASELINE = "svd_baseline"
    FLAT_GNN = "flat_gnn"
    HGNN = "hgnn"


@dataclass
class EmbeddingResult:
    l: object
    r: object
    model: EdgeModel = field(default_factory=EdgeModel)
    provenance: Provenance = Provenance.SVD_BASELINE

    def __post_init__(self):
        self.provenance = Provenance(self.provenance)
        lv, rv = ad.value_of(self.l), ad.value_of(self.r)
        if lv.shape != rv.shape:
            raise DimensionError(f"l {lv.shape} and r {rv.shape} differ in shape")

    @property
    def n(self) -> int:
        return ad.value_of(self.l).shape[0]

    @property
    def d(self) -> int:
        return ad.value_of(self.l).shape[1]


class Theta(str, enum.Enum):
    CONCATENATION = "concatenation"
    AFFINE = "affine"
    MLP = "mlp"


@dataclass
class AssemblyRule:
    """How per-level features are combined into one vector per input node.

    ``levels=None`` includes every hidden level. ``weights`` holds
    ``W``/``bias`` for affine, ``W1``/``b1``/``W2``/``b2`` for the tanh MLP.
    """

    theta: Theta = Theta.CONCATENATION
    levels: tuple | None = None
    weights: dict = field(default_factory=dict)

    def __post_init__(self):
        self.theta = Theta(self.theta)


def truncated_svd(a, d: int, seed: int = 0, tol: float = 1e-10, max_iter: int = 10_000, oversample: int = 8):
    """Leading ``d`` singular triplets by block subspace iteration with Rayleigh-Ritz.

    The block is ``d + oversample`` wide (capped at the matrix rank bound),
    so small matrices are resolved exactly in one pass. Converged when every
    kept triplet has residual ||A v - s u|| <= tol * s_max.
    """
    if sp.issparse(a):
        a = sp.csr_matrix(a, dtype=np.float64)
    else:
        a = np.asarray(a, dtype=np.float64)
    m, n = a.shape
    kmax = min(m, n)
    if not 1 <= d <= kmax:
        raise ValidationError(f"rank {d} outside 1..{kmax}")
    p = min(kmax, d + oversample)
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(np.asarray(a @ rng.standard_normal((n, p))))
    for _ in range(max_iter):
        small = np.asarray((a.T @ q).T)  # q^T A, p x n
        ub, s, vt = np.linalg.svd(small, full_matrices=False)
        u = q @ ub[:, :d]
        v = vt[:d].T
        s = s[:d]
        scale = s[0] if s[0] > 0 else 1.0
        resid = np.asarray(a @ v) - u * s
        if np.max(np.linalg.norm(resid, axis=0)) <= tol * scale:
            break
        z, _ = np.linalg.qr(np.asarray(a.T @ q))
        q, _ = np.linalg.qr(np.asarray(a @ z))
    else:
        raise NonConvergenceError(f"truncated SVD did not reach tol={tol} in {max_iter} iterations")
    # sign: largest-magnitude entry of each right vector is positive
    pivot = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[pivot, np.arange(d)])
    signs[signs == 0] = 1.0
    return u * signs, s, v * signs


def svd_embedding(g: Graph, d: int, seed: int = 0, tol: float = 1e-10, max_iter: int = 10_000) -> EmbeddingResult:
    """l = U_d sqrt(S_d), r = V_d sqrt(S_d): the best rank-d fit of A under l.r."""
    if not 1 <= d <= g.n:
        raise ValidationError(f"rank {d} outside 1..{g.n}")
    u, s, v = truncated_svd(g.adjacency, d, seed, tol, max_iter)
    root = np.sqrt(s)
    return EmbeddingResult(u * root, v * root, EdgeModel.init(EdgeModelKind.GAUSSIAN_FIXED_SIGMA, d), Provenance.SVD_BASELINE)


def _level_parts(state: FeatureState, stack: LayerStack, levels) -> list:
    xs = state.layers
    if len(xs) != len(stack):
        raise DimensionError(f"state has {len(xs)} layers, stack has {len(stack)}")
    levels = range(1, stack.depth + 1) if levels is None else levels
    parts = [xs[0]]
    for h in levels:
        op = compose_down(stack, h)  # |L^h| x |L^0|
        parts.append(ad.matmul(sp.csr_matrix(op.T), xs[h]))
    return parts


def _split(x):
    d2 = ad.value_of(x).shape[1]
    if d2 % 2:
        raise DimensionError(f"assembled dimension {d2} is odd and cannot be split into (l, r)")
    h = d2 // 2
    return ad.getitem(x, (slice(None), slice(0, h))), ad.getitem(x, (slice(None), slice(h, d2)))


def assemble_hierarchical_embedding(state: FeatureState, stack: LayerStack, rule: AssemblyRule | None = None,
                                    model: EdgeModel | None = None) -> EmbeddingResult:
    """Combine x^0(a) with sum_b H^{h->0}[b, a] x^h(b) for each included level.

    Concatenation keeps pairing intact: every part is split into its own
    (l, r) halves and the result is (l parts..., r parts...). Affine and MLP
    rules map the stacked parts and split the output down the middle.
    """
    rule = rule or AssemblyRule()
    parts = _level_parts(state, stack, rule.levels)
    if rule.theta is Theta.CONCATENATION:
        halves = [_split(p) for p in parts]
        l = ad.concat([h[0] for h in halves], axis=1)
        r = ad.concat([h[1] for h in halves], axis=1)
    else:
        x = ad.concat(parts, axis=1)
        w = rule.weights
        if rule.theta is Theta.AFFINE:
            z = ad.add(ad.matmul(x, w["W"]), w["bias"])
        else:
            hidden = ad.tanh(ad.add(ad.matmul(x, w["W1"]), w["b1"]))
            z = ad.add(ad.matmul(hidden, w["W2"]), w["b2"])
        l, r = _split(z)
    d = ad.value_of(l).shape[1]
    model = model or EdgeModel.init(EdgeModelKind.GAUSSIAN_FIXED_SIGMA, d)
    return EmbeddingResult(l, r, model, Provenance.HGNN if stack.depth else Provenance.FLAT_GNN)


def reconstruct(e: EmbeddingResult, pairs: PairSet | None = None, graph: Graph | None = None):
    """Predicted weight (mean or edge probability) for every pair in the set.

    Returns ``(src, dst, w_hat)``.
    """
    g = graph if graph is not None else Graph.empty(e.n)
    src, dst = (pairs or PairSet()).enumerate(g)
    lv, rv = np.asarray(ad.value_of(e.l)), np.asarray(ad.value_of(e.r))
    w_hat = np.asarray(ad.value_of(e.model.location(lv[src], rv[dst])))
    return src, dst, w_hat


def reconstruction_nmse(g: Graph, e: EmbeddingResult, pairs: PairSet | None = None) -> float:
    src, dst, w_hat = reconstruct(e, pairs, g)
    return nmse(pair_weights(g, src, dst), w_hat)


def effective_dimensionality(stack_or_sizes, dims: Sequence[int]) -> float:
    """Total learned feature count over all layers per input-layer node."""
    sizes = stack_or_sizes.sizes if isinstance(stack_or_sizes, LayerStack) else list(stack_or_sizes)
    dims = list(dims)
    if len(dims) != len(sizes):
        raise DimensionError(f"{len(dims)} dims for {len(sizes)} layers")
    if not sizes or sizes[0] == 0:
        return 0.0
    return float(sum(n * d for n, d in zip(sizes, dims)) / sizes[0])


def hierarchical_svd_embedding(g: Graph, stack: LayerStack, ranks: Sequence[int], seed: int = 0) -> tuple[EmbeddingResult, FeatureState]:
    """Fit paired features level by level, coarsest first, under a fixed-sigma Gaussian model.

    Level h explains the remaining residual R through M Z M^T, where
    M = (H^{h->0})^T spreads coarse features onto input nodes and Z = L R^T
    has rank ``ranks[h]``. With M = Q S (thin QR) the least-squares optimum
    is Z = S^-1 svd_d(Q^T R Q) S^-T. Returns the assembled embedding and
    the per-level features x^h = (l^h, r^h).
    """
    ranks = list(ranks)
    if len(ranks) != len(stack):
        raise DimensionError(f"{len(ranks)} ranks for {len(stack)} layers")
    if stack.graphs[0] is not g and stack.graphs[0].n != g.n:
        raise DimensionError("stack does not sit on this graph")
    resid = g.dense()
    feats: list = [None] * len(stack)
    for h in range(stack.depth, -1, -1):
        k = stack.sizes[h]
        d = ranks[h]
        if d < 0 or d > k:
            raise ValidationError(f"level {h}: rank {d} outside 0..{k}")
        if d == 0:
            feats[h] = np.zeros((k, 0))
            continue
        if h == 0:
            q, s_inv = np.eye(g.n), np.eye(g.n)
        else:
            m = compose_down(stack, h).T.toarray()
            q, s = np.linalg.qr(m)
            s_inv = np.linalg.pinv(s)
        proj = q.T @ resid @ q
        u, sig, v = truncated_svd(proj, d, seed=seed + h)
        root = np.sqrt(sig)
        lh, rh = s_inv @ (u * root), s_inv @ (v * root)
        if h == 0:
            resid = resid - lh @ rh.T
        else:
            resid = resid - (m @ lh) @ (m @ rh).T
        feats[h] = np.hstack([lh, rh])
    state = FeatureState(feats, 0)
    emb = assemble_hierarchical_embedding(state, stack, AssemblyRule(Theta.CONCATENATION))
    return emb, state
