"""Detection and segmentation evaluation.

Matching is COCO-style: within each (image, category) group, detections are
visited in descending score (ties by input order) and each greedily takes
the unmatched ground truth with the highest overlap at or above the IoU
threshold.  Average precision interpolates the precision-recall curve at
101 recall points.  Recall at a false-positive budget sweeps thresholds
located at detection scores and reports recall at the lowest threshold
whose corpus-wide FP per image stays within the budget.

Mask overlap rasterizes polygons on the image canvas with pixel-center
sampling and even-odd fill, then compares bitmaps.
"""

from __future__ import annotations

import csv
import functools
import io
import math
from dataclasses import dataclass

import numpy as np

from ._io import atomic_write_text, dump_json
from .datasets import (PARENT_CLASSES, AnnotationSet, Instance,
                       load_annotations, load_detections)
from .exceptions import AnnotationError, ShapeError
from .geometry import Box

__all__ = [
    "MatchResult",
    "EvalConfig",
    "EvalReport",
    "iou_box",
    "rasterize_polygon",
    "iou_mask",
    "match_detections",
    "average_precision",
    "recall_at_fp",
    "evaluate",
    "evaluate_files",
]


def iou_box(a: Box, b: Box) -> float:
    """Intersection over union of two boxes in continuous coordinates."""
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def rasterize_polygon(polygon, width: int, height: int) -> np.ndarray:
    """Even-odd fill of a polygon onto a (height, width) boolean bitmap.

    A pixel (row i, column j) is inside when its center (j + 0.5, i + 0.5)
    is inside the polygon.  Scanlines use the half-open vertex rule, so
    shared vertices and horizontal edges do not double-count crossings.
    """
    poly = np.asarray(polygon, dtype=np.float64)
    if poly.ndim != 2 or poly.shape[1] != 2 or poly.shape[0] < 3:
        raise ShapeError(
            f"polygon must be (n >= 3, 2) vertices, got shape {poly.shape}"
        )
    if not np.all(np.isfinite(poly)):
        raise ValueError("polygon has non-finite vertices")
    if width < 1 or height < 1:
        raise ValueError(f"canvas must be positive, got {width}x{height}")
    mask = np.zeros((height, width), dtype=bool)
    crossings: list[list[float]] = [[] for _ in range(height)]
    n = poly.shape[0]
    for e in range(n):
        x0, y0 = poly[e]
        x1, y1 = poly[(e + 1) % n]
        if y0 == y1:
            continue
        lo, hi = (y0, y1) if y0 < y1 else (y1, y0)
        # rows whose center y = i + 0.5 lies in [lo, hi)
        i_lo = max(0, math.ceil(lo - 0.5))
        i_hi = min(height, math.ceil(hi - 0.5))
        slope = (x1 - x0) / (y1 - y0)
        for i in range(i_lo, i_hi):
            crossings[i].append(x0 + (i + 0.5 - y0) * slope)
    for i, xs in enumerate(crossings):
        if not xs:
            continue
        xs.sort()
        for k in range(0, len(xs) - 1, 2):
            j_lo = max(0, math.ceil(xs[k] - 0.5))
            j_hi = min(width, math.ceil(xs[k + 1] - 0.5))
            if j_lo < j_hi:
                mask[i, j_lo:j_hi] = True
    return mask


def iou_mask(polygon_a, polygon_b, canvas: tuple[int, int]) -> float:
    """Bitmap IoU of two polygons rasterized on a (width, height) canvas.

    A polygon that covers no pixel on the canvas is degenerate there and
    contributes zero overlap, so the result is 0.
    """
    width, height = canvas
    a = rasterize_polygon(polygon_a, width, height)
    b = rasterize_polygon(polygon_b, width, height)
    union = int(np.logical_or(a, b).sum())
    if union == 0 or not a.any() or not b.any():
        return 0.0
    return int(np.logical_and(a, b).sum()) / union


@dataclass(frozen=True)
class MatchResult:
    """Greedy matching outcome, aligned with the input detection order.

    ``tp[k]`` says whether detection k matched a ground truth;
    ``det_to_gt[k]`` is its ground-truth index or -1; ``gt_matched[g]``
    flips when ground truth g is claimed.  False positives are ``~tp``,
    false negatives are ``~gt_matched``.
    """

    tp: np.ndarray
    det_to_gt: np.ndarray
    gt_matched: np.ndarray

    @property
    def fp(self) -> np.ndarray:
        return ~self.tp

    @property
    def fn(self) -> np.ndarray:
        return ~self.gt_matched


def _group(instances) -> dict[tuple[int, int], list[int]]:
    groups: dict[tuple[int, int], list[int]] = {}
    for k, inst in enumerate(instances):
        groups.setdefault((inst.image_id, inst.category_id), []).append(k)
    return groups


def match_detections(dets, gts, iou_fn, threshold: float) -> MatchResult:
    """Greedy per-(image, category) matching at an IoU threshold.

    Detections are visited in descending score with ties kept in input
    order; each takes the unmatched ground truth of highest IoU >= the
    threshold (IoU ties go to the earliest ground truth).
    """
    dets = list(dets)
    gts = list(gts)
    for k, d in enumerate(dets):
        if d.score is None:
            raise AnnotationError(f"detections[{k}]: missing score")
    tp = np.zeros(len(dets), dtype=bool)
    det_to_gt = np.full(len(dets), -1, dtype=np.int64)
    gt_matched = np.zeros(len(gts), dtype=bool)
    gt_groups = _group(gts)
    for key, d_idx in _group(dets).items():
        g_idx = gt_groups.get(key, [])
        order = sorted(d_idx, key=lambda k: -dets[k].score)
        for k in order:
            best_iou, best_g = threshold, -1
            for g in g_idx:
                if gt_matched[g]:
                    continue
                value = iou_fn(dets[k], gts[g])
                if value > best_iou or (value == best_iou and best_g == -1
                                        and value >= threshold):
                    best_iou, best_g = value, g
            if best_g >= 0:
                tp[k] = True
                det_to_gt[k] = best_g
                gt_matched[best_g] = True
    return MatchResult(tp=tp, det_to_gt=det_to_gt, gt_matched=gt_matched)


def average_precision(scores, tp, n_gt: int) -> float:
    """101-point interpolated AP from per-detection match flags.

    Detections are ranked globally by descending score (ties by input
    order).  At each of the recall points {0, 0.01, ..., 1} the precision
    is the maximum achieved at that recall or beyond; AP is their mean.
    """
    if n_gt < 1:
        raise ValueError("average_precision needs at least one ground truth")
    scores = np.asarray(scores, dtype=np.float64)
    tp = np.asarray(tp, dtype=bool)
    if scores.shape != tp.shape or scores.ndim != 1:
        raise ShapeError(
            f"scores {scores.shape} and tp {tp.shape} must be equal-length 1-d"
        )
    if scores.size == 0:
        return 0.0
    order = np.argsort(-scores, kind="stable")
    hits = tp[order]
    cum_tp = np.cumsum(hits)
    cum_fp = np.cumsum(~hits)
    recall = cum_tp / n_gt
    precision = cum_tp / (cum_tp + cum_fp)
    points = np.linspace(0.0, 1.0, 101)
    total = 0.0
    for r in points:
        eligible = precision[recall >= r]
        total += float(eligible.max()) if eligible.size else 0.0
    return total / points.size


def recall_at_fp(dets, gts, n_images: int, iou_fn=None,
                 iou_threshold: float = 0.25,
                 fp_per_image: float = 0.1) -> float | None:
    """Recall at the most permissive score cutoff within an FP budget.

    Thresholds are swept over the detection scores themselves (a cutoff
    keeps every detection scoring at least its value, so tied scores stay
    together).  The lowest cutoff whose total false positives divided by
    ``n_images`` stays within ``fp_per_image`` wins; accepting nothing
    always qualifies, so a result always exists.  Returns None when there
    is no ground truth to recall.
    """
    if n_images < 1:
        raise ValueError(f"n_images must be >= 1, got {n_images}")
    if fp_per_image < 0:
        raise ValueError(f"fp_per_image must be >= 0, got {fp_per_image}")
    gts = list(gts)
    dets = list(dets)
    if not gts:
        return None
    if iou_fn is None:
        iou_fn = lambda d, g: iou_box(d.box, g.box)
    m = match_detections(dets, gts, iou_fn, iou_threshold)
    if not dets:
        return 0.0
    scores = np.asarray([d.score for d in dets], dtype=np.float64)
    budget = fp_per_image * n_images
    for t in np.unique(scores):  # ascending: first hit is the lowest cutoff
        kept = scores >= t
        if int(np.sum(kept & m.fp)) <= budget:
            return int(np.sum(kept & m.tp)) / len(gts)
    return 0.0


@dataclass(frozen=True)
class EvalConfig:
    """Evaluation settings: IoU thresholds for AP, FP budgets for recall."""

    iou_thresholds: tuple[float, ...] = (0.25, 0.5, 0.75)
    recall_fp: tuple[float, ...] = (0.1,)
    kind: str = "box"
    recall_iou: float = 0.25

    def __post_init__(self):
        if self.kind not in ("box", "mask"):
            raise ValueError(f"kind must be 'box' or 'mask', got {self.kind!r}")
        if not self.iou_thresholds:
            raise ValueError("need at least one IoU threshold")
        for t in self.iou_thresholds:
            if not 0 < t <= 1:
                raise ValueError(f"IoU threshold {t} outside (0, 1]")


@dataclass(frozen=True)
class EvalReport:
    """Per-category, mean, and parent-class metrics; values in [0, 1].

    Categories without ground truth have no defined AP or recall; they are
    reported as None and excluded from means, which therefore cover all
    thirteen categories whenever all thirteen have ground truth.
    """

    categories: tuple[str, ...]
    parents: tuple[str, ...]
    kind: str
    recall_iou: float
    n_images: int
    ap: dict[float, tuple[float | None, ...]]
    mean_ap: dict[float, float | None]
    superclass_ap: dict[float, dict[str, float | None]]
    recall: dict[float, tuple[float | None, ...]]
    superclass_recall: dict[float, dict[str, float | None]]

    def to_json_dict(self) -> dict:
        def keyed(d):
            return {f"{k:g}": v for k, v in d.items()}

        return {
            "kind": self.kind,
            "n_images": self.n_images,
            "recall_iou": self.recall_iou,
            "categories": list(self.categories),
            "parents": list(self.parents),
            "ap": {f"{t:g}": list(v) for t, v in self.ap.items()},
            "mean_ap": keyed(self.mean_ap),
            "superclass_ap": {f"{t:g}": v for t, v in self.superclass_ap.items()},
            "recall": {f"{c:g}": list(v) for c, v in self.recall.items()},
            "superclass_recall": {f"{c:g}": v
                                  for c, v in self.superclass_recall.items()},
        }

    def format_text(self) -> str:
        def cell(v):
            return "  absent" if v is None else f"{v:8.4f}"

        thresholds = sorted(self.ap)
        caps = sorted(self.recall)
        header = f"{'category':<20}" + "".join(
            f" ap@{t:g}".rjust(9) for t in thresholds
        ) + "".join(f" r@{c:g}fp".rjust(9) for c in caps)
        lines = [f"{self.kind} evaluation over {self.n_images} images "
                 f"(recall IoU {self.recall_iou:g})", header]
        for k, name in enumerate(self.categories):
            row = f"{name:<20}"
            for t in thresholds:
                row += " " + cell(self.ap[t][k])
            for c in caps:
                row += " " + cell(self.recall[c][k])
            lines.append(row)
        row = f"{'mean':<20}"
        for t in thresholds:
            row += " " + cell(self.mean_ap[t])
        lines.append(row)
        for parent in PARENT_CLASSES:
            row = f"{parent:<20}"
            for t in thresholds:
                row += " " + cell(self.superclass_ap[t].get(parent))
            for c in caps:
                row += " " + cell(self.superclass_recall[c].get(parent))
            lines.append(row)
        return "\n".join(lines)

    def csv_rows(self) -> list[list]:
        rows = [["metric", "setting", "category", "parent", "value"]]

        def add(metric, setting, category, parent, value):
            rows.append([metric, f"{setting:g}", category, parent,
                         "" if value is None else f"{value:.6f}"])

        for t in sorted(self.ap):
            for k, name in enumerate(self.categories):
                add("ap", t, name, self.parents[k], self.ap[t][k])
            add("mean_ap", t, "mean", "", self.mean_ap[t])
            for parent in PARENT_CLASSES:
                add("superclass_ap", t, parent, parent,
                    self.superclass_ap[t].get(parent))
        for c in sorted(self.recall):
            for k, name in enumerate(self.categories):
                add("recall_at_fp", c, name, self.parents[k], self.recall[c][k])
            for parent in PARENT_CLASSES:
                add("superclass_recall", c, parent, parent,
                    self.superclass_recall[c].get(parent))
        return rows

    def to_csv(self, path: str) -> None:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerows(self.csv_rows())
        atomic_write_text(path, buffer.getvalue())

    def save(self, path: str) -> None:
        dump_json(path, self.to_json_dict())


def _mean_present(values) -> float | None:
    present = [v for v in values if v is not None]
    return sum(present) / len(present) if present else None


def _mask_iou_fn(ann: AnnotationSet):
    sizes = {im.id: (im.width, im.height) for im in ann.images}

    # Bitmaps are big (width x height booleans); keep only a working set.
    @functools.lru_cache(maxsize=64)
    def raster(inst) -> np.ndarray | None:
        if inst.polygon is None:
            return None
        w, h = sizes[inst.image_id]
        return rasterize_polygon(inst.polygon, w, h)

    def fn(det, gt) -> float:
        a, b = raster(det), raster(gt)
        if a is None or b is None or not a.any() or not b.any():
            return 0.0
        union = int(np.logical_or(a, b).sum())
        return int(np.logical_and(a, b).sum()) / union

    return fn


def evaluate(ann: AnnotationSet, dets, config: EvalConfig = EvalConfig()
             ) -> EvalReport:
    """Full corpus evaluation against an annotation set."""
    cats = ann.sorted_categories()
    names = tuple(c.name for c in cats)
    parents = tuple(c.parent for c in cats)
    dets = list(dets)
    gts = list(ann.instances)
    if config.kind == "mask":
        iou_fn = _mask_iou_fn(ann)
    else:
        iou_fn = lambda d, g: iou_box(d.box, g.box)

    det_cat = np.asarray([d.category_id for d in dets], dtype=np.int64)
    det_scores = np.asarray([d.score if d.score is not None else np.nan
                             for d in dets], dtype=np.float64)
    if np.any(np.isnan(det_scores)):
        bad = int(np.flatnonzero(np.isnan(det_scores))[0])
        raise AnnotationError(f"detections[{bad}]: missing score")
    gt_cat = np.asarray([g.category_id for g in gts], dtype=np.int64)

    ap: dict[float, tuple] = {}
    mean_ap: dict[float, float | None] = {}
    superclass_ap: dict[float, dict[str, float | None]] = {}
    for t in config.iou_thresholds:
        matched = match_detections(dets, gts, iou_fn, t)
        per_cat = []
        for c in cats:
            n_gt = int(np.sum(gt_cat == c.id))
            if n_gt == 0:
                per_cat.append(None)
                continue
            pick = det_cat == c.id
            per_cat.append(average_precision(det_scores[pick],
                                             matched.tp[pick], n_gt))
        ap[t] = tuple(per_cat)
        mean_ap[t] = _mean_present(per_cat)
        superclass_ap[t] = {
            parent: _mean_present(v for v, p in zip(per_cat, parents)
                                  if p == parent)
            for parent in PARENT_CLASSES
        }

    recall: dict[float, tuple] = {}
    superclass_recall: dict[float, dict[str, float | None]] = {}
    for cap in config.recall_fp:
        per_cat = []
        for c in cats:
            per_cat.append(recall_at_fp(
                [d for d in dets if d.category_id == c.id],
                [g for g in gts if g.category_id == c.id],
                n_images=len(ann.images), iou_fn=iou_fn,
                iou_threshold=config.recall_iou, fp_per_image=cap,
            ))
        recall[cap] = tuple(per_cat)
        superclass_recall[cap] = {
            parent: _mean_present(v for v, p in zip(per_cat, parents)
                                  if p == parent)
            for parent in PARENT_CLASSES
        }

    return EvalReport(
        categories=names, parents=parents, kind=config.kind,
        recall_iou=config.recall_iou, n_images=len(ann.images),
        ap=ap, mean_ap=mean_ap, superclass_ap=superclass_ap,
        recall=recall, superclass_recall=superclass_recall,
    )


def evaluate_files(gt_path: str, det_path: str,
                   config: EvalConfig = EvalConfig(),
                   canonical: bool = True) -> EvalReport:
    ann = load_annotations(gt_path, canonical=canonical)
    dets = load_detections(det_path, ann)
    return evaluate(ann, dets, config)
