"""Disease co-occurrence graph and graph-conditioned category features.

The graph has one node per category.  Edge weights are conditional
probabilities estimated from image-level co-occurrence counts: the weight
from node i to node j is count(i and j) / count(i), so rows of the edge
matrix are not symmetric even though the count matrix is.

At inference the graph reweights learned category embeddings.  A pooled
global feature is scored per category (sigmoid), each category's embedding
is scaled by its score, messages are summed along incoming edges, region
class probabilities map node states onto regions, and a final projection
reduces them to the output width.  Analytic gradients cover all three
weight matrices plus both feature inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ._io import dump_json, load_json
from .exceptions import ShapeError
from .tensor import gaussian_init, sigmoid
from .validation import as_float_array

__all__ = [
    "RelationGraph",
    "DiseaseParams",
    "DiseaseOutput",
    "DiseaseGrads",
    "count_cooccurrence",
    "build_edges",
    "global_pool",
    "global_scores",
    "bce_loss",
    "bce_grad",
    "category_embeddings",
    "map_to_regions",
    "reduce_cate",
    "disease_forward",
    "disease_grads",
    "DiseaseRelationModule",
]


def count_cooccurrence(annotations, n_categories: int | None = None) -> np.ndarray:
    """Image-level co-occurrence counts as a symmetric (C, C) integer matrix.

    ``annotations`` is either an :class:`chestrel.datasets.AnnotationSet` or
    an iterable of per-image collections of 0-based category indexes (then
    ``n_categories`` is required).  Entry (i, j) counts images containing
    both categories; the diagonal counts images containing the category.
    Multiple instances within one image count once.
    """
    if hasattr(annotations, "presence_sets"):
        sets = annotations.presence_sets()
        n = len(annotations.categories)
    else:
        sets = [frozenset(int(i) for i in s) for s in annotations]
        if n_categories is None:
            raise ValueError("n_categories is required for raw presence sets")
        n = int(n_categories)
    if n < 1:
        raise ValueError(f"need at least one category, got {n}")
    presence = np.zeros((len(sets), n), dtype=np.int64)
    for row, present in enumerate(sets):
        for k in present:
            if not 0 <= k < n:
                raise ValueError(
                    f"image {row}: category index {k} outside [0, {n})"
                )
            presence[row, k] = 1
    return presence.T @ presence


def build_edges(counts) -> np.ndarray:
    """Conditional-probability edges: edges[i, j] = counts[i, j] / counts[i, i].

    Rows of categories that never occur (zero diagonal) are all zero;
    otherwise the diagonal is exactly 1.
    """
    counts = np.asarray(counts)
    _check_counts(counts)
    diag = np.diagonal(counts).astype(np.float64)
    safe = np.where(diag > 0, diag, 1.0)
    edges = counts.astype(np.float64) / safe[:, None]
    edges[diag == 0] = 0.0
    return edges


def _check_counts(counts: np.ndarray) -> None:
    if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
        raise ShapeError(f"counts must be square, got shape {counts.shape}")
    if not np.issubdtype(counts.dtype, np.integer):
        raise ValueError(f"counts must be integers, got dtype {counts.dtype}")
    if np.any(counts < 0):
        raise ValueError("counts must be nonnegative")
    if np.any(counts != counts.T):
        raise ValueError("counts must be symmetric")
    diag = np.diagonal(counts)
    bound = np.minimum(diag[:, None], diag[None, :])
    if np.any(counts > bound):
        raise ValueError(
            "pair count exceeds a marginal count; image-level counting "
            "cannot produce that"
        )


@dataclass(frozen=True)
class RelationGraph:
    """Category names with their co-occurrence counts and edge weights."""

    categories: tuple[str, ...]
    counts: np.ndarray
    edges: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "categories", tuple(self.categories))
        counts = np.ascontiguousarray(np.asarray(self.counts, dtype=np.int64))
        edges = as_float_array(self.edges, "edges", ndim=2)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "edges", edges)
        self.validate()

    @property
    def n_categories(self) -> int:
        return len(self.categories)

    def validate(self) -> None:
        n = len(self.categories)
        _check_counts(self.counts)
        if self.counts.shape != (n, n):
            raise ShapeError(
                f"counts shape {self.counts.shape} does not match "
                f"{n} categories"
            )
        if self.edges.shape != (n, n):
            raise ShapeError(
                f"edges shape {self.edges.shape} does not match "
                f"{n} categories"
            )
        # Each edge must equal the exact rational quotient of its counts.
        for i in range(n):
            diag = int(self.counts[i, i])
            for j in range(n):
                want = Fraction(int(self.counts[i, j]), diag) if diag else Fraction(0)
                if self.edges[i, j] != float(want):
                    raise ValueError(
                        f"edges[{i}, {j}] = {self.edges[i, j]!r} does not equal "
                        f"counts[{i}, {j}] / counts[{i}, {i}]"
                    )

    @classmethod
    def from_annotations(cls, ann) -> "RelationGraph":
        counts = count_cooccurrence(ann)
        return cls(categories=ann.category_names(), counts=counts,
                   edges=build_edges(counts))

    @classmethod
    def from_counts(cls, categories, counts) -> "RelationGraph":
        counts = np.asarray(counts, dtype=np.int64)
        return cls(categories=tuple(categories), counts=counts,
                   edges=build_edges(counts))

    def save(self, path: str) -> None:
        dump_json(path, {
            "categories": list(self.categories),
            "counts": self.counts.tolist(),
            "edges": self.edges.tolist(),
        })

    @classmethod
    def load(cls, path: str) -> "RelationGraph":
        doc = load_json(path)
        for key in ("categories", "counts", "edges"):
            if key not in doc:
                raise ShapeError(f"{path}: missing {key!r}")
        return cls(
            categories=tuple(doc["categories"]),
            counts=np.asarray(doc["counts"], dtype=np.int64),
            edges=np.asarray(doc["edges"], dtype=np.float64),
        )


@dataclass(frozen=True)
class DiseaseParams:
    """Learnable weights: category embeddings plus two projections.

    ``W_emb`` holds one embedding row per category (default 13x1024),
    ``W_t`` reduces mapped region features (default 1024x256), and ``W_cls``
    scores the pooled global feature per category (default 256x13).
    """

    W_emb: np.ndarray
    W_t: np.ndarray
    W_cls: np.ndarray

    def __post_init__(self):
        for name in ("W_emb", "W_t", "W_cls"):
            object.__setattr__(self, name, as_float_array(getattr(self, name), name, ndim=2))
        if self.W_emb.shape[1] != self.W_t.shape[0]:
            raise ShapeError(
                f"embedding width disagrees: W_emb {self.W_emb.shape} vs "
                f"W_t {self.W_t.shape}"
            )
        if self.W_cls.shape[1] != self.W_emb.shape[0]:
            raise ShapeError(
                f"category count disagrees: W_cls {self.W_cls.shape} vs "
                f"W_emb {self.W_emb.shape}"
            )

    @property
    def n_categories(self) -> int:
        return self.W_emb.shape[0]

    @classmethod
    def random(cls, seed: int = 0, n_categories: int = 13, d_emb: int = 1024,
               d_out: int = 256, d_global: int = 256,
               stddev: float = 0.01) -> "DiseaseParams":
        return cls(
            W_emb=gaussian_init((n_categories, d_emb), seed, stddev),
            W_t=gaussian_init((d_emb, d_out), seed + 1, stddev),
            W_cls=gaussian_init((d_global, n_categories), seed + 2, stddev),
        )

    def element_count(self) -> int:
        return self.W_emb.size + self.W_t.size + self.W_cls.size

    def save(self, path: str) -> None:
        dump_json(path, {
            name: {"shape": list(getattr(self, name).shape),
                   "data": getattr(self, name).ravel().tolist()}
            for name in ("W_emb", "W_t", "W_cls")
        })

    @classmethod
    def load(cls, path: str) -> "DiseaseParams":
        doc = load_json(path)
        tensors = {}
        for name in ("W_emb", "W_t", "W_cls"):
            if name not in doc:
                raise ShapeError(f"{path}: missing weight tensor {name!r}")
            entry = doc[name]
            arr = np.asarray(entry["data"], dtype=np.float64)
            tensors[name] = arr.reshape(entry["shape"])
        return cls(**tensors)


@dataclass(frozen=True)
class DiseaseOutput:
    logits: np.ndarray   # (C,)
    beta: np.ndarray     # (C,), sigmoid scores
    z: np.ndarray        # (C, d_emb), graph-aggregated node states
    f_cate: np.ndarray   # (n_r, d_out)


@dataclass(frozen=True)
class DiseaseGrads:
    W_emb: np.ndarray
    W_t: np.ndarray
    W_cls: np.ndarray
    class_probs: np.ndarray
    global_feature: np.ndarray

    def as_dict(self) -> dict[str, np.ndarray]:
        return {
            "W_emb": self.W_emb, "W_t": self.W_t, "W_cls": self.W_cls,
            "class_probs": self.class_probs,
            "global_feature": self.global_feature,
        }


def global_pool(feature_map) -> np.ndarray:
    """Spatial mean of an (h, w, d) feature map -> (d,)."""
    fmap = as_float_array(feature_map, "feature_map", ndim=3)
    return fmap.mean(axis=(0, 1))


def global_scores(F_s, W_cls) -> tuple[np.ndarray, np.ndarray]:
    """Per-category logits and sigmoid scores of the pooled global feature."""
    F_s = as_float_array(F_s, "F_s", ndim=1)
    W_cls = as_float_array(W_cls, "W_cls", ndim=2)
    if F_s.shape[0] != W_cls.shape[0]:
        raise ShapeError(
            f"global feature width {F_s.shape[0]} does not match "
            f"W_cls {W_cls.shape}"
        )
    logits = F_s @ W_cls
    return logits, sigmoid(logits)


def bce_loss(logits, targets) -> float:
    """Binary cross-entropy against sigmoid(logits), summed over categories.

    Evaluated as y * log(1 + exp(-z)) + (1 - y) * log(1 + exp(z)) through
    ``logaddexp``, which stays finite and accurate for extreme logits.
    """
    logits = as_float_array(logits, "logits", ndim=1)
    targets = as_float_array(targets, "targets", ndim=1)
    if logits.shape != targets.shape:
        raise ShapeError(
            f"logits shape {logits.shape} differs from targets {targets.shape}"
        )
    if np.any(targets < 0) or np.any(targets > 1):
        raise ValueError("targets must lie in [0, 1]")
    terms = (targets * np.logaddexp(0.0, -logits)
             + (1.0 - targets) * np.logaddexp(0.0, logits))
    return float(terms.sum())


def bce_grad(logits, targets) -> np.ndarray:
    """Gradient of :func:`bce_loss` in the logits: sigmoid(logits) - targets."""
    logits = as_float_array(logits, "logits", ndim=1)
    targets = as_float_array(targets, "targets", ndim=1)
    if logits.shape != targets.shape:
        raise ShapeError(
            f"logits shape {logits.shape} differs from targets {targets.shape}"
        )
    return sigmoid(logits) - targets


def category_embeddings(beta, edges, W_emb) -> np.ndarray:
    """Graph message passing: z_i = sum_j beta_j * edges[j, i] * W_emb[j]."""
    beta = as_float_array(beta, "beta", ndim=1)
    edges = as_float_array(edges, "edges", ndim=2)
    W_emb = as_float_array(W_emb, "W_emb", ndim=2)
    n = beta.shape[0]
    if edges.shape != (n, n):
        raise ShapeError(f"edges shape {edges.shape} does not match {n} scores")
    if W_emb.shape[0] != n:
        raise ShapeError(
            f"W_emb has {W_emb.shape[0]} embedding rows for {n} categories"
        )
    return edges.T @ (beta[:, None] * W_emb)


def map_to_regions(class_probs, z) -> np.ndarray:
    """Blend node states into regions: r_k = sum_i class_probs[k, i] * z_i."""
    probs = as_float_array(class_probs, "class_probs", ndim=2)
    z = as_float_array(z, "z", ndim=2)
    if probs.shape[1] != z.shape[0]:
        raise ShapeError(
            f"class_probs width {probs.shape[1]} does not match "
            f"{z.shape[0]} node states"
        )
    return probs @ z


def reduce_cate(r, W_t) -> np.ndarray:
    """Project mapped region features to the output width."""
    r = as_float_array(r, "r", ndim=2)
    W_t = as_float_array(W_t, "W_t", ndim=2)
    if r.shape[1] != W_t.shape[0]:
        raise ShapeError(
            f"region feature width {r.shape[1]} does not match W_t {W_t.shape}"
        )
    return r @ W_t


def disease_forward(class_probs, global_feature, graph: RelationGraph,
                    params: DiseaseParams) -> DiseaseOutput:
    """Composite forward pass for one image's regions."""
    if graph.n_categories != params.n_categories:
        raise ShapeError(
            f"graph has {graph.n_categories} categories, weights have "
            f"{params.n_categories}"
        )
    logits, beta = global_scores(global_feature, params.W_cls)
    z = category_embeddings(beta, graph.edges, params.W_emb)
    r = map_to_regions(class_probs, z)
    return DiseaseOutput(logits=logits, beta=beta, z=z,
                         f_cate=reduce_cate(r, params.W_t))


def disease_grads(class_probs, global_feature, graph: RelationGraph,
                  params: DiseaseParams, cotangent) -> DiseaseGrads:
    """Gradients of <cotangent, f_cate> for all weights and feature inputs."""
    probs = as_float_array(class_probs, "class_probs", ndim=2)
    F_s = as_float_array(global_feature, "global_feature", ndim=1)
    cot = as_float_array(cotangent, "cotangent", ndim=2)
    out = disease_forward(probs, F_s, graph, params)
    if cot.shape != (probs.shape[0], params.W_t.shape[1]):
        raise ShapeError(
            f"cotangent shape {cot.shape} does not match output "
            f"({probs.shape[0]}, {params.W_t.shape[1]})"
        )
    r = map_to_regions(probs, out.z)

    d_Wt = r.T @ cot
    d_r = cot @ params.W_t.T
    d_probs = d_r @ out.z.T
    d_z = probs.T @ d_r

    # z = edges.T @ (beta[:, None] * W_emb); pull d_z back along the edges.
    d_msg = graph.edges @ d_z
    d_Wemb = out.beta[:, None] * d_msg
    d_beta = np.sum(params.W_emb * d_msg, axis=1)

    d_logits = d_beta * out.beta * (1.0 - out.beta)
    d_Wcls = np.outer(F_s, d_logits)
    d_Fs = params.W_cls @ d_logits

    return DiseaseGrads(W_emb=d_Wemb, W_t=d_Wt, W_cls=d_Wcls,
                        class_probs=d_probs, global_feature=d_Fs)


class DiseaseRelationModule(BaseEstimator):
    """Graph-conditioned category features for proposals.

    ``fit`` estimates the co-occurrence graph from an annotation set (and
    draws fresh Gaussian weights unless explicit ones are supplied);
    ``transform`` maps per-proposal class probabilities plus the image's
    pooled global feature to category-aware features, exposing the sigmoid
    category scores as ``scores_``.

    Parameters
    ----------
    d_emb : int, default=1024
        Width of the per-category embedding rows.
    d_out : int, default=256
        Output feature width.
    d_global : int, default=256
        Pooled global feature width.
    random_state : int, default=0
        Seed for Gaussian weight initialization.
    init_stddev : float, default=0.01
        Stddev of the Gaussian initializer.
    """

    def __init__(self, d_emb: int = 1024, d_out: int = 256,
                 d_global: int = 256, random_state: int = 0,
                 init_stddev: float = 0.01):
        self.d_emb = d_emb
        self.d_out = d_out
        self.d_global = d_global
        self.random_state = random_state
        self.init_stddev = init_stddev

    def fit(self, X, y=None, params: DiseaseParams | None = None,
            graph: RelationGraph | None = None):
        """Estimate the graph from annotations ``X`` (or adopt ``graph``)."""
        if graph is None:
            graph = RelationGraph.from_annotations(X)
        if params is None:
            params = DiseaseParams.random(
                seed=self.random_state, n_categories=graph.n_categories,
                d_emb=self.d_emb, d_out=self.d_out, d_global=self.d_global,
                stddev=self.init_stddev,
            )
        if params.n_categories != graph.n_categories:
            raise ShapeError(
                f"weights expect {params.n_categories} categories, graph has "
                f"{graph.n_categories}"
            )
        self.graph_ = graph
        self.params_ = params
        return self

    def transform(self, class_probs, global_feature) -> np.ndarray:
        if not hasattr(self, "graph_"):
            raise NotFittedError("DiseaseRelationModule must be fit on annotations first")
        out = disease_forward(class_probs, global_feature, self.graph_, self.params_)
        self.scores_ = out.beta
        return out.f_cate
