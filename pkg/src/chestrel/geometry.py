"""Spatial relation encoding between proposal boxes and anatomical parts.

Coordinates are image pixels with the origin at the top-left corner and y
increasing downward; boxes are (x1, y1, x2, y2) corner pairs with strictly
positive width and height.  A proposal's relation to each of the five
anatomical parts (left lung, right lung, left scapula, right scapula,
heart) is an 8-vector of corner coordinate differences normalized by the
width/height of the box covering both lungs; the five blocks concatenate
into a 40-vector which a sinusoidal map embeds into 80 * d_e dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from ._io import dump_json, load_json
from .validation import as_box_array

__all__ = [
    "Box",
    "AnatomicalParts",
    "LungUnion",
    "SpatialEncoding",
    "PART_ORDER",
    "lung_union",
    "part_relation",
    "spatial_vector",
    "sinusoidal_embed",
    "grid_centers",
    "load_parts_record",
    "save_parts_record",
    "SpatialRelationEncoder",
]

PART_ORDER = ("left_lung", "right_lung", "left_scapula", "right_scapula", "heart")

WAVELENGTH_BASE = 1000.0


@dataclass(frozen=True)
class Box:
    """Axis-aligned rectangle in pixel coordinates; zero area is rejected."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        for v in (self.x1, self.y1, self.x2, self.y2):
            if not np.isfinite(v):
                raise ValueError(f"box has non-finite coordinate: {self}")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError(f"degenerate box (requires x1 < x2 and y1 < y2): {self}")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    def translated(self, dx: float, dy: float) -> "Box":
        return Box(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)

    def scaled(self, s: float) -> "Box":
        if s <= 0:
            raise ValueError(f"scale factor must be positive, got {s}")
        return Box(self.x1 * s, self.y1 * s, self.x2 * s, self.y2 * s)

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.y1, self.x2, self.y2], dtype=np.float64)

    @classmethod
    def from_xywh(cls, x: float, y: float, w: float, h: float) -> "Box":
        return cls(x, y, x + w, y + h)


@dataclass(frozen=True)
class AnatomicalParts:
    """The five part boxes of one image, in the canonical part order."""

    left_lung: Box
    right_lung: Box
    left_scapula: Box
    right_scapula: Box
    heart: Box

    def boxes(self) -> tuple[Box, ...]:
        return tuple(getattr(self, name) for name in PART_ORDER)

    def translated(self, dx: float, dy: float) -> "AnatomicalParts":
        return AnatomicalParts(*(b.translated(dx, dy) for b in self.boxes()))

    def scaled(self, s: float) -> "AnatomicalParts":
        return AnatomicalParts(*(b.scaled(s) for b in self.boxes()))

    def to_dict(self) -> dict:
        return {name: list(getattr(self, name).as_array()) for name in PART_ORDER}

    @classmethod
    def from_dict(cls, record: dict) -> "AnatomicalParts":
        missing = [name for name in PART_ORDER if name not in record]
        if missing:
            raise ValueError(f"parts record is missing {missing}")
        return cls(*(Box(*record[name]) for name in PART_ORDER))


@dataclass(frozen=True)
class LungUnion:
    """Minimal box covering both lungs; its extents normalize all relations."""

    box: Box

    @property
    def w_l(self) -> float:
        return self.box.width

    @property
    def h_l(self) -> float:
        return self.box.height


@dataclass(frozen=True)
class SpatialEncoding:
    """A 40-d relation vector together with its sinusoidal embedding."""

    m: np.ndarray
    d_e: int
    f_spa: np.ndarray


def lung_union(parts: AnatomicalParts) -> LungUnion:
    """Componentwise min/max cover of the two lung boxes."""
    a, b = parts.left_lung, parts.right_lung
    return LungUnion(Box(min(a.x1, b.x1), min(a.y1, b.y1),
                         max(a.x2, b.x2), max(a.y2, b.y2)))


def part_relation(roi: Box, part: Box, lu: LungUnion) -> np.ndarray:
    """Normalized corner-difference 8-vector between a proposal and a part.

    Order: (x1-x1, y1-y1, x1-x2, y1-y2, x2-x1, y2-y1, x2-x2, y2-y2), with
    roi coordinates first in every difference, x differences divided by the
    lung-union width and y differences by its height.
    """
    w, h = lu.w_l, lu.h_l
    if w <= 0 or h <= 0:
        raise ValueError(f"degenerate lung union: w_l={w}, h_l={h}")
    return np.array(
        [
            (roi.x1 - part.x1) / w,
            (roi.y1 - part.y1) / h,
            (roi.x1 - part.x2) / w,
            (roi.y1 - part.y2) / h,
            (roi.x2 - part.x1) / w,
            (roi.y2 - part.y1) / h,
            (roi.x2 - part.x2) / w,
            (roi.y2 - part.y2) / h,
        ],
        dtype=np.float64,
    )


def spatial_vector(roi: Box, parts: AnatomicalParts) -> np.ndarray:
    """Concatenation of the five part-relation blocks in canonical part order."""
    lu = lung_union(parts)
    return np.concatenate([part_relation(roi, p, lu) for p in parts.boxes()])


def sinusoidal_embed(m, d_e: int) -> np.ndarray:
    """Embed each scalar with d_e sine and d_e cosine waves.

    For input length L the output has length 2 * L * d_e: first the sine
    blocks of every scalar in input order, then the cosine blocks in the
    same order.  Within a block the wavelength index j runs 0..d_e-1 and
    scalar s contributes sin(s / 1000^(j/d_e)) (resp. cos).
    """
    if d_e < 1:
        raise ValueError(f"d_e must be >= 1, got {d_e}")
    m = np.ascontiguousarray(m, dtype=np.float64).ravel()
    j = np.arange(d_e, dtype=np.float64)
    phase = m[:, None] / WAVELENGTH_BASE ** (j / d_e)  # (L, d_e)
    return np.concatenate([np.sin(phase).ravel(), np.cos(phase).ravel()])


def grid_centers(box: Box, n_d: int) -> np.ndarray:
    """Centers of an n_d x n_d uniform partition of ``box``.

    Returned row-major (y outer, x inner) as an (n_d**2, 2) array of (x, y);
    cell (r, c) has center (x1 + (c+0.5)*w/n_d, y1 + (r+0.5)*h/n_d).
    """
    if n_d < 1:
        raise ValueError(f"n_d must be >= 1, got {n_d}")
    step_x = box.width / n_d
    step_y = box.height / n_d
    cols = box.x1 + (np.arange(n_d) + 0.5) * step_x
    rows = box.y1 + (np.arange(n_d) + 0.5) * step_y
    xs, ys = np.meshgrid(cols, rows)  # row-major: y varies along axis 0
    return np.stack([xs.ravel(), ys.ravel()], axis=1)


def encode_spatial(boxes, parts: AnatomicalParts, d_e: int = 8) -> SpatialEncoding:
    """Full spatial encoding for a batch of proposal boxes.

    ``m`` stacks the per-proposal 40-vectors as rows; ``f_spa`` stacks the
    embeddings, one row of width 80 * d_e per proposal.
    """
    arr = as_box_array(boxes)
    rois = [Box(*row) for row in arr]
    m = np.stack([spatial_vector(r, parts) for r in rois]) if rois else \
        np.zeros((0, 40))
    f_spa = np.stack([sinusoidal_embed(row, d_e) for row in m]) if rois else \
        np.zeros((0, 80 * d_e))
    return SpatialEncoding(m=m, d_e=d_e, f_spa=f_spa)


def save_parts_record(path: str, parts: AnatomicalParts) -> None:
    """Write one image's parts file: the five part names mapped to boxes."""
    dump_json(path, parts.to_dict())


def load_parts_record(path: str) -> AnatomicalParts:
    doc = load_json(path)
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: expected a mapping of part names to boxes")
    try:
        return AnatomicalParts.from_dict(doc)
    except (ValueError, TypeError) as exc:
        raise ValueError(f"{path}: {exc}") from exc


class SpatialRelationEncoder(BaseEstimator, TransformerMixin):
    """Encode proposal boxes relative to one image's anatomical parts.

    ``fit`` binds the per-image anatomy (the five part boxes); ``transform``
    maps an (n, 4) proposal-box array to an (n, 80 * d_e) embedding matrix.

    Parameters
    ----------
    d_e : int, default=8
        Number of wavelengths per scalar; the output width is 80 * d_e.
    """

    def __init__(self, d_e: int = 8):
        self.d_e = d_e

    def fit(self, X: AnatomicalParts, y=None):
        if self.d_e < 1:
            raise ValueError(f"d_e must be >= 1, got {self.d_e}")
        if not isinstance(X, AnatomicalParts):
            X = AnatomicalParts.from_dict(X)
        self.parts_ = X
        self.lung_union_ = lung_union(X)
        return self

    def transform(self, X) -> np.ndarray:
        if not hasattr(self, "parts_"):
            raise NotFittedError("SpatialRelationEncoder must be fit on anatomical parts first")
        return encode_spatial(X, self.parts_, d_e=self.d_e).f_spa
