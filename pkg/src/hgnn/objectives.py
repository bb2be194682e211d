"""Training objectives: edge-model likelihoods, modularity, label losses, accuracy.

Everything accepts plain arrays or autodiff tensors for the learned
quantities; the graph is always a constant.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .errors import DimensionError, ValidationError
from .graph import Graph, degrees
from .hierarchy import Partition

SIGMA_FLOOR = 1e-6
P_CLAMP = 1e-12


class EdgeModelKind(str, enum.Enum):
    BERNOULLI = "bernoulli"
    GAUSSIAN = "gaussian"
    GAUSSIAN_FIXED_SIGMA = "gaussian_fixed_sigma"


def _affine_params(d, dot=1.0, const=0.0):
    return {"dot": np.array([dot]), "l": np.zeros(d), "r": np.zeros(d), "const": np.array([const])}


@dataclass
class EdgeModel:
    """Distribution of an edge weight given the source's l and target's r vectors.

    The location (Bernoulli logit or Gaussian mean) and the Gaussian scale
    are each ``dot * l.r + u.l + v.r + const`` pushed through a
    nonlinearity. Defaults give p = sigmoid(l.r) and mu = l.r. ``link``
    overrides the location map entirely with a callable of (l_rows, r_rows).
    """

    kind: EdgeModelKind = EdgeModelKind.GAUSSIAN_FIXED_SIGMA
    params: dict = field(default_factory=dict)
    mean_nonlinearity: str = "identity"
    fixed_sigma: float = 1.0
    link: Callable | None = None

    def __post_init__(self):
        self.kind = EdgeModelKind(self.kind)
        if self.fixed_sigma <= 0:
            raise ValidationError("fixed_sigma must be positive")

    @classmethod
    def init(cls, kind, d: int, fixed_sigma=1.0, mean_nonlinearity="identity") -> "EdgeModel":
        kind = EdgeModelKind(kind)
        params = {"loc": _affine_params(d)}
        if kind is EdgeModelKind.GAUSSIAN:
            # softplus(log(e - 1)) = 1
            params["scale"] = _affine_params(d, dot=0.0, const=math.log(math.e - 1.0))
        return cls(kind, params, mean_nonlinearity, fixed_sigma)

    def _affine(self, name, lr, rr, dot):
        p = self.params[name]
        z = ad.mul(p["dot"], dot)
        z = ad.add(z, ad.matmul(lr, p["l"]))
        z = ad.add(z, ad.matmul(rr, p["r"]))
        return ad.add(z, p["const"])

    def location(self, lr, rr):
        """Edge probability (Bernoulli) or mean (Gaussian) per pair of rows."""
        if self.link is not None:
            return self.link(lr, rr)
        dot = ad.total(ad.mul(lr, rr), axis=1)
        if "loc" not in self.params:
            z = dot
        else:
            z = self._affine("loc", lr, rr, dot)
        if self.kind is EdgeModelKind.BERNOULLI:
            return ad.sigmoid(z)
        return ad.nonlinearity(self.mean_nonlinearity)(z)

    def scale(self, lr, rr):
        if self.kind is EdgeModelKind.GAUSSIAN_FIXED_SIGMA:
            return None
        if self.kind is EdgeModelKind.BERNOULLI:
            raise ValidationError("Bernoulli model has no scale")
        dot = ad.total(ad.mul(lr, rr), axis=1)
        s = ad.softplus(self._affine("scale", lr, rr, dot))
        return ad.clip(s, SIGMA_FLOOR, np.inf)

    def named_arrays(self):
        for group, p in self.params.items():
            for k, v in p.items():
                yield f"{group}.{k}", v

    def with_arrays(self, arrays: dict) -> "EdgeModel":
        params = {g: {k: arrays.get(f"{g}.{k}", v) for k, v in p.items()} for g, p in self.params.items()}
        return EdgeModel(self.kind, params, self.mean_nonlinearity, self.fixed_sigma, self.link)


@dataclass
class PairSet:
    """Which ordered node pairs enter the likelihood sums.

    ``rule`` is ``all_off_diagonal``, ``sampled`` (every observed edge plus
    ``negatives`` uniformly drawn non-edges) or ``explicit``.
    """

    rule: str = "all_off_diagonal"
    negatives: int = 0
    seed: int = 0
    pairs: tuple = ()
    include_diagonal: bool = False

    def enumerate(self, g: Graph) -> tuple[np.ndarray, np.ndarray]:
        n = g.n
        if self.rule == "all_off_diagonal":
            src, dst = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
            src, dst = src.ravel(), dst.ravel()
            if not self.include_diagonal:
                keep = src != dst
                src, dst = src[keep], dst[keep]
            return src, dst
        if self.rule == "explicit":
            arr = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)
            if arr.size and (arr.min() < 0 or arr.max() >= n):
                raise ValidationError("explicit pair index out of range")
            if not self.include_diagonal and np.any(arr[:, 0] == arr[:, 1]):
                raise ValidationError("explicit pairs contain self-pairs; set include_diagonal")
            return arr[:, 0].copy(), arr[:, 1].copy()
        if self.rule == "sampled":
            coo = g.adjacency.tocoo()
            keep = (coo.row != coo.col) | self.include_diagonal
            pos = set(zip(coo.row[keep].tolist(), coo.col[keep].tolist()))
            rng = np.random.default_rng(self.seed)
            neg: list[tuple[int, int]] = []
            seen = set()
            budget = n * n - (0 if self.include_diagonal else n) - len(pos)
            target = min(self.negatives, max(0, budget))
            while len(neg) < target:
                i, j = (int(x) for x in rng.integers(0, n, size=2))
                if (i == j and not self.include_diagonal) or (i, j) in pos or (i, j) in seen:
                    continue
                seen.add((i, j))
                neg.append((i, j))
            allp = sorted(pos) + neg
            arr = np.asarray(allp, dtype=np.int64).reshape(-1, 2)
            return arr[:, 0], arr[:, 1]
        raise ValidationError(f"unknown pair rule {self.rule!r}")


def pair_weights(g: Graph, src, dst) -> np.ndarray:
    return np.asarray(g.adjacency[src, dst]).ravel()


def _pair_rows(g: Graph, l, r, pairs: PairSet | None):
    lv, rv = ad.value_of(l), ad.value_of(r)
    if lv.shape != rv.shape or lv.shape[0] != g.n:
        raise DimensionError(f"l {lv.shape} and r {rv.shape} must both be {g.n} x d")
    src, dst = (pairs or PairSet()).enumerate(g)
    return src, dst, ad.getitem(l, src), ad.getitem(r, dst), pair_weights(g, src, dst)


def log_likelihood(g: Graph, l, r, model: EdgeModel, pairs: PairSet | None = None):
    """Joint log-likelihood of the observed weights over the pair set.

    Bernoulli: sum w ln p + (1 - w) ln(1 - p), with p clamped away from 0 and 1.
    Gaussian: -sum (w - mu)^2 / (2 sigma^2) - sum ln sigma (constant dropped).
    """
    src, dst, lr, rr, w = _pair_rows(g, l, r, pairs)
    if model.kind is EdgeModelKind.BERNOULLI:
        if np.any((w != 0) & (w != 1)):
            raise ValidationError("Bernoulli model needs 0/1 weights on every pair")
        p = ad.clip(model.location(lr, rr), P_CLAMP, 1.0 - P_CLAMP)
        terms = ad.add(ad.mul(w, ad.log(p)), ad.mul(1.0 - w, ad.log(ad.add(1.0, ad.neg(p)))))
        return ad.total(terms)
    mu = model.location(lr, rr)
    resid2 = ad.square(ad.add(w, ad.neg(mu)))
    if model.kind is EdgeModelKind.GAUSSIAN_FIXED_SIGMA:
        s = model.fixed_sigma
        return ad.add(ad.mul(-1.0 / (2 * s * s), ad.total(resid2)), -len(w) * math.log(s))
    sigma = model.scale(lr, rr)
    fit = ad.total(ad.div(resid2, ad.mul(2.0, ad.square(sigma))))
    return ad.neg(ad.add(fit, ad.total(ad.log(sigma))))


def dot_mean(lr, rr):
    return ad.total(ad.mul(lr, rr), axis=1)


def squared_error_objective(g: Graph, l, r, mu_fn=None, pairs: PairSet | None = None):
    """Sum over pairs of (w - mu(l(a), r(b)))^2; mu defaults to the dot product."""
    src, dst, lr, rr, w = _pair_rows(g, l, r, pairs)
    mu = (mu_fn or dot_mean)(lr, rr)
    return ad.total(ad.square(ad.add(w, ad.neg(mu))))


def modularity(g: Graph, c):
    """Q = (1/T) sum_groups sum_ij C[i,g] C[j,g] (A[i,j] - dout[i] din[j] / T).

    ``c`` is an n x k attachment matrix with rows summing to one (a
    Partition, an array or a tensor for soft training).
    """
    if g.has_negative_weights():
        raise ValidationError("modularity requires non-negative edge weights")
    t = g.total_weight()
    if t <= 0:
        raise ValidationError("modularity requires positive total weight")
    if isinstance(c, Partition):
        c = c.dense()
    elif sp.issparse(c):
        c = c.toarray()
    cv = ad.value_of(c)
    if cv.ndim != 2 or cv.shape[0] != g.n:
        raise DimensionError(f"assignment shape {cv.shape} does not match {g.n} nodes")
    rows = cv.sum(axis=1)
    if np.any(np.abs(rows - 1.0) > 1e-9):
        raise ValidationError("assignment rows must sum to 1")
    dout, din = degrees(g, "out"), degrees(g, "in")
    within = ad.total(ad.mul(c, ad.matmul(g.adjacency, c)))
    expected = ad.total(ad.mul(ad.matmul(dout, c), ad.matmul(din, c)))
    return ad.add(ad.mul(within, 1.0 / t), ad.mul(expected, -1.0 / (t * t)))


def node_label_loss(pred, truth, kind="mse"):
    pv = ad.value_of(pred)
    truth = np.asarray(truth, dtype=np.float64)
    if pv.shape != truth.shape:
        raise DimensionError(f"prediction shape {pv.shape} != truth shape {truth.shape}")
    if kind == "mse":
        return ad.mean(ad.square(ad.add(pred, -truth)))
    if kind == "bce":
        if np.any((pv <= 0) | (pv >= 1)):
            raise ValidationError("bce predictions must lie strictly inside (0, 1)")
        if np.any((truth != 0) & (truth != 1)):
            raise ValidationError("bce truth must be 0/1")
        terms = ad.add(ad.mul(truth, ad.log(pred)), ad.mul(1.0 - truth, ad.log(ad.add(1.0, ad.neg(pred)))))
        return ad.neg(ad.mean(terms))
    raise ValidationError(f"unknown loss kind {kind!r}")


def classification_accuracy(pred_labels, truth) -> float:
    pred_labels, truth = list(pred_labels), list(truth)
    if len(pred_labels) != len(truth):
        raise DimensionError(f"{len(pred_labels)} predictions for {len(truth)} labels")
    if not truth:
        return 0.0
    return sum(p == t for p, t in zip(pred_labels, truth)) / len(truth)


def nmse(w, w_hat) -> float:
    """sum (w - w_hat)^2 / sum w^2."""
    w = np.asarray(w, dtype=np.float64)
    w_hat = np.asarray(w_hat, dtype=np.float64)
    denom = float(np.sum(w * w))
    if denom == 0:
        raise ValidationError("NMSE undefined for an all-zero target")
    return float(np.sum((w - w_hat) ** 2) / denom)
