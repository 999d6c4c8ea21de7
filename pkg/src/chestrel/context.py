"""Contextual attention over lung-field grids.

A proposal attends over the cells of two grids (one per lung field).  Each
proposal/grid pair gets an appearance compatibility score (dot product of
linearly projected features) and a nonnegative spatial prior (ReLU of a
learned linear map of normalized coordinate differences).  The prior gates
the softmax multiplicatively: weights are softmax(log prior + compatibility),
so zero-prior cells receive exactly zero attention.  Attended grid features
are pooled per proposal and projected to the output width.

Gradients of <cotangent, output> with respect to every learnable weight and
both feature inputs are computed analytically; they are certified against
central finite differences by the gradcheck module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ._io import dump_json, load_json
from .exceptions import DegenerateAttentionError, ShapeError
from .geometry import Box, LungUnion, grid_centers, lung_union as _union_of
from .tensor import gaussian_init, softmax_rows
from .validation import as_box_array, as_float_array

__all__ = [
    "GridFeatures",
    "ContextParams",
    "ContextOutput",
    "ContextGrads",
    "compatibility",
    "spatial_prior",
    "spatial_priors",
    "attention_weights",
    "aggregate",
    "context_forward",
    "context_grads",
    "ContextualRelationModule",
]


@dataclass(frozen=True)
class GridFeatures:
    """Grid-pooled features of the two lung fields plus their boxes.

    ``left`` and ``right`` are (n_d**2, d_m) arrays whose rows follow the
    row-major cell order of :func:`chestrel.geometry.grid_centers`.
    """

    left: np.ndarray
    right: np.ndarray
    left_lung: Box
    right_lung: Box

    def __post_init__(self):
        object.__setattr__(self, "left", as_float_array(self.left, "left", ndim=2))
        object.__setattr__(self, "right", as_float_array(self.right, "right", ndim=2))
        if self.left.shape != self.right.shape:
            raise ShapeError(
                f"grid features differ in shape: left {self.left.shape}, "
                f"right {self.right.shape}"
            )
        n = math.isqrt(self.left.shape[0])
        if n * n != self.left.shape[0] or n < 1:
            raise ShapeError(
                f"grid cell count {self.left.shape[0]} is not a positive square"
            )

    @property
    def n_d(self) -> int:
        return math.isqrt(self.left.shape[0])

    @property
    def d_m(self) -> int:
        return self.left.shape[1]

    @property
    def n_cells(self) -> int:
        """Total grid columns: all left cells row-major, then all right cells."""
        return 2 * self.left.shape[0]

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.left, self.right], axis=0)

    def centers(self) -> np.ndarray:
        """(2 * n_d**2, 2) cell centers in the stacked column order."""
        return np.concatenate(
            [grid_centers(self.left_lung, self.n_d),
             grid_centers(self.right_lung, self.n_d)], axis=0
        )

    def lung_union(self) -> LungUnion:
        a, b = self.left_lung, self.right_lung
        return LungUnion(Box(min(a.x1, b.x1), min(a.y1, b.y1),
                             max(a.x2, b.x2), max(a.y2, b.y2)))


@dataclass(frozen=True)
class ContextParams:
    """Learnable weights, stored as (input, output) matrices.

    Default extents: W_a 1024x1024, W_g 256x1024, W_s 1x4, W_k 256x1024.
    The projections of proposal and grid features share their output width.
    """

    W_a: np.ndarray
    W_g: np.ndarray
    W_s: np.ndarray
    W_k: np.ndarray

    def __post_init__(self):
        for name in ("W_a", "W_g", "W_s", "W_k"):
            object.__setattr__(self, name, as_float_array(getattr(self, name), name, ndim=2))
        if self.W_a.shape[1] != self.W_g.shape[1]:
            raise ShapeError(
                f"projected widths differ: W_a {self.W_a.shape} vs W_g {self.W_g.shape}"
            )
        if self.W_g.shape[0] != self.W_k.shape[0]:
            raise ShapeError(
                f"grid feature width disagrees: W_g {self.W_g.shape} vs W_k {self.W_k.shape}"
            )
        if self.W_s.shape != (1, 4):
            raise ShapeError(f"W_s must be 1x4, got {self.W_s.shape}")

    @classmethod
    def random(cls, seed: int = 0, d_a: int = 1024, d_m: int = 256,
               d_k: int = 1024, d_cxt: int = 1024, stddev: float = 0.01) -> "ContextParams":
        return cls(
            W_a=gaussian_init((d_a, d_k), seed, stddev),
            W_g=gaussian_init((d_m, d_k), seed + 1, stddev),
            W_s=gaussian_init((1, 4), seed + 2, stddev),
            W_k=gaussian_init((d_m, d_cxt), seed + 3, stddev),
        )

    def element_count(self) -> int:
        return self.W_a.size + self.W_g.size + self.W_s.size + self.W_k.size

    def save(self, path: str) -> None:
        dump_json(path, {
            name: {"shape": list(getattr(self, name).shape),
                   "data": getattr(self, name).ravel().tolist()}
            for name in ("W_a", "W_g", "W_s", "W_k")
        })

    @classmethod
    def load(cls, path: str) -> "ContextParams":
        doc = load_json(path)
        tensors = {}
        for name in ("W_a", "W_g", "W_s", "W_k"):
            if name not in doc:
                raise ShapeError(f"{path}: missing weight tensor {name!r}")
            entry = doc[name]
            arr = np.asarray(entry["data"], dtype=np.float64)
            tensors[name] = arr.reshape(entry["shape"])
        return cls(**tensors)


@dataclass(frozen=True)
class ContextOutput:
    f_cxt: np.ndarray  # (n_r, d_cxt)
    attn: np.ndarray   # (n_r, 2 * n_d**2), rows sum to 1


@dataclass(frozen=True)
class ContextGrads:
    W_a: np.ndarray
    W_g: np.ndarray
    W_s: np.ndarray
    W_k: np.ndarray
    f_a: np.ndarray
    grid_left: np.ndarray
    grid_right: np.ndarray

    def as_dict(self) -> dict[str, np.ndarray]:
        return {
            "W_a": self.W_a, "W_g": self.W_g, "W_s": self.W_s, "W_k": self.W_k,
            "f_a": self.f_a, "grid_left": self.grid_left, "grid_right": self.grid_right,
        }


def compatibility(f_a, grids: GridFeatures, params: ContextParams) -> np.ndarray:
    """Appearance scores: F[i, j] = <W_a-projected f_a_i, W_g-projected grid_j>."""
    f_a = as_float_array(f_a, "f_a", ndim=2)
    if f_a.shape[1] != params.W_a.shape[0]:
        raise ShapeError(
            f"f_a width {f_a.shape[1]} does not match W_a {params.W_a.shape}"
        )
    if grids.d_m != params.W_g.shape[0]:
        raise ShapeError(
            f"grid width {grids.d_m} does not match W_g {params.W_g.shape}"
        )
    queries = f_a @ params.W_a
    keys = grids.stacked() @ params.W_g
    return queries @ keys.T


def _coord_differences(boxes: np.ndarray, centers: np.ndarray,
                       lu: LungUnion) -> np.ndarray:
    """(n_r, G, 4) tensor of normalized proposal-corner minus cell-center."""
    if lu.w_l <= 0 or lu.h_l <= 0:
        raise ValueError(f"degenerate lung union: w_l={lu.w_l}, h_l={lu.h_l}")
    cx = centers[None, :, 0]
    cy = centers[None, :, 1]
    return np.stack(
        [
            (boxes[:, None, 0] - cx) / lu.w_l,
            (boxes[:, None, 1] - cy) / lu.h_l,
            (boxes[:, None, 2] - cx) / lu.w_l,
            (boxes[:, None, 3] - cy) / lu.h_l,
        ],
        axis=2,
    )


def spatial_prior(roi: Box, center, lu: LungUnion, W_s) -> float:
    """Nonnegative prior for one proposal/cell pair: ReLU(W_s . differences)."""
    W_s = as_float_array(W_s, "W_s").reshape(-1)
    if W_s.shape != (4,):
        raise ShapeError(f"W_s must hold 4 coefficients, got shape {W_s.shape}")
    diffs = _coord_differences(roi.as_array()[None, :],
                               np.asarray(center, dtype=np.float64)[None, :], lu)
    return float(max(diffs[0, 0] @ W_s, 0.0))


def spatial_priors(boxes, centers, lu: LungUnion, W_s) -> np.ndarray:
    """All proposal/cell priors at once; returns (n_r, G)."""
    boxes = as_box_array(boxes)
    centers = as_float_array(centers, "centers", ndim=2)
    W_s = as_float_array(W_s, "W_s").reshape(-1)
    raw = _coord_differences(boxes, centers, lu) @ W_s
    return np.maximum(raw, 0.0)


def attention_weights(F, P) -> np.ndarray:
    """Prior-gated softmax rows: w_j proportional to P_j * exp(F_j).

    Computed as softmax over (log P + F) with log 0 -> -inf so that
    zero-prior cells get exactly zero weight.  A proposal whose priors are
    all zero has no distribution; that raises
    :class:`chestrel.exceptions.DegenerateAttentionError` naming the row.
    """
    F = as_float_array(F, "F", ndim=2)
    P = as_float_array(P, "P", ndim=2)
    if F.shape != P.shape:
        raise ShapeError(f"F shape {F.shape} differs from P shape {P.shape}")
    if np.any(P < 0):
        raise ValueError("P: spatial priors must be nonnegative")
    dead_rows = np.flatnonzero(~np.any(P > 0, axis=1))
    if dead_rows.size:
        raise DegenerateAttentionError(int(dead_rows[0]))
    with np.errstate(divide="ignore"):
        logits = np.log(P) + F
    return softmax_rows(logits)


def aggregate(attn, grids: GridFeatures, W_k) -> np.ndarray:
    """Attention-weighted pooling of grid features, projected by W_k."""
    attn = as_float_array(attn, "attn", ndim=2)
    W_k = as_float_array(W_k, "W_k", ndim=2)
    if attn.shape[1] != grids.n_cells:
        raise ShapeError(
            f"attention width {attn.shape[1]} does not match {grids.n_cells} grid cells"
        )
    if W_k.shape[0] != grids.d_m:
        raise ShapeError(
            f"W_k {W_k.shape} does not accept grid features of width {grids.d_m}"
        )
    return (attn @ grids.stacked()) @ W_k


def context_forward(boxes, f_a, grids: GridFeatures,
                    params: ContextParams) -> ContextOutput:
    """Composite forward pass over all proposals of one image."""
    boxes = as_box_array(boxes)
    f_a = as_float_array(f_a, "f_a", ndim=2)
    if boxes.shape[0] != f_a.shape[0]:
        raise ShapeError(
            f"{boxes.shape[0]} boxes but {f_a.shape[0]} feature rows"
        )
    F = compatibility(f_a, grids, params)
    P = spatial_priors(boxes, grids.centers(), grids.lung_union(), params.W_s)
    attn = attention_weights(F, P)
    return ContextOutput(f_cxt=aggregate(attn, grids, params.W_k), attn=attn)


def context_grads(boxes, f_a, grids: GridFeatures, params: ContextParams,
                  cotangent) -> ContextGrads:
    """Gradients of <cotangent, f_cxt> for all weights and feature inputs.

    The ReLU subgradient at 0 is taken as 0, so cells whose raw prior is
    exactly 0 contribute nothing to the W_s gradient.
    """
    boxes = as_box_array(boxes)
    f_a = as_float_array(f_a, "f_a", ndim=2)
    cot = as_float_array(cotangent, "cotangent", ndim=2)

    G = grids.stacked()
    centers = grids.centers()
    lu = grids.lung_union()
    w_s = params.W_s.reshape(-1)

    # Recompute the forward intermediates.
    queries = f_a @ params.W_a
    keys = G @ params.W_g
    F = queries @ keys.T
    S = _coord_differences(boxes, centers, lu)
    U = S @ w_s
    P = np.maximum(U, 0.0)
    attn = attention_weights(F, P)
    pooled = attn @ G
    if cot.shape != (f_a.shape[0], params.W_k.shape[1]):
        raise ShapeError(
            f"cotangent shape {cot.shape} does not match output "
            f"({f_a.shape[0]}, {params.W_k.shape[1]})"
        )

    d_Wk = pooled.T @ cot
    d_pooled = cot @ params.W_k.T
    d_attn = d_pooled @ G.T
    d_grid = attn.T @ d_pooled

    # Softmax backward, rows independent.
    d_logits = attn * (d_attn - np.sum(d_attn * attn, axis=1, keepdims=True))

    d_F = d_logits
    live = U > 0.0
    d_U = np.where(live, d_logits / np.where(live, P, 1.0), 0.0)
    d_Ws = np.einsum("ij,ijk->k", d_U, S).reshape(1, 4)

    d_queries = d_F @ keys
    d_keys = d_F.T @ queries
    d_Wa = f_a.T @ d_queries
    d_fa = d_queries @ params.W_a.T
    d_Wg = G.T @ d_keys
    d_grid = d_grid + d_keys @ params.W_g.T

    half = grids.left.shape[0]
    return ContextGrads(
        W_a=d_Wa, W_g=d_Wg, W_s=d_Ws, W_k=d_Wk, f_a=d_fa,
        grid_left=d_grid[:half], grid_right=d_grid[half:],
    )


class ContextualRelationModule(BaseEstimator):
    """Attention-pooled lung-field context features for proposals.

    ``fit`` binds one image's grid features (and draws fresh Gaussian
    weights unless explicit ones are supplied); ``transform`` maps proposal
    boxes plus their pooled features to context features, exposing the
    attention rows as ``attention_``.

    Parameters
    ----------
    n_d : int, default=7
        Grid resolution per lung field.
    d_m : int, default=256
        Grid feature width.
    d_a : int, default=1024
        Proposal feature width.
    d_k : int, default=1024
        Shared width of the projected query/key space.
    d_cxt : int, default=1024
        Output feature width.
    random_state : int, default=0
        Seed for Gaussian weight initialization.
    init_stddev : float, default=0.01
        Stddev of the Gaussian initializer.
    """

    def __init__(self, n_d: int = 7, d_m: int = 256, d_a: int = 1024,
                 d_k: int = 1024, d_cxt: int = 1024, random_state: int = 0,
                 init_stddev: float = 0.01):
        self.n_d = n_d
        self.d_m = d_m
        self.d_a = d_a
        self.d_k = d_k
        self.d_cxt = d_cxt
        self.random_state = random_state
        self.init_stddev = init_stddev

    def fit(self, X: GridFeatures, y=None, params: ContextParams | None = None):
        if X.n_d != self.n_d or X.d_m != self.d_m:
            raise ShapeError(
                f"grid features are n_d={X.n_d}, d_m={X.d_m}; estimator expects "
                f"n_d={self.n_d}, d_m={self.d_m}"
            )
        if params is None:
            params = ContextParams.random(
                seed=self.random_state, d_a=self.d_a, d_m=self.d_m,
                d_k=self.d_k, d_cxt=self.d_cxt, stddev=self.init_stddev,
            )
        self.grids_ = X
        self.params_ = params
        return self

    def transform(self, boxes, features) -> np.ndarray:
        if not hasattr(self, "grids_"):
            raise NotFittedError("ContextualRelationModule must be fit on grid features first")
        out = context_forward(boxes, features, self.grids_, self.params_)
        self.attention_ = out.attn
        return out.f_cxt
