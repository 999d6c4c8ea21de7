"""Annotation schema, dataset statistics, and seeded synthetic corpora.

Annotation files follow the familiar detection-dataset convention: one JSON
document with ``images``, ``categories``, and ``annotations`` tables, boxes
stored as ``[x, y, width, height]`` and converted to corner form internally.
The canonical taxonomy is thirteen chest abnormality categories grouped
under three parent classes (LUNG, PLEURA, MEDIASTINUM).

The synthetic corpus generator produces reproducible annotation sets with
plausible thoracic geometry (lungs either side of the midline, scapulae
overlapping the upper lung corners, heart straddling the lower midline,
disease boxes placed according to their parent class) so that counting and
evaluation code can be exercised against independent recounts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._io import dump_json, load_json
from .exceptions import AnnotationError
from .geometry import AnatomicalParts, Box

__all__ = [
    "CATEGORY_TABLE",
    "CANONICAL_CATEGORIES",
    "PARENT_CLASSES",
    "PARENT_OF",
    "ImageRecord",
    "CategoryRecord",
    "Instance",
    "AnnotationSet",
    "DatasetStats",
    "SyntheticCorpus",
    "load_annotations",
    "save_annotations",
    "load_chestx_det",
    "load_detections",
    "save_detections",
    "stats",
    "synth_corpus",
    "synth_detections",
    "synth_image_features",
]

# Canonical taxonomy in report row order.
CATEGORY_TABLE = (
    ("Atelectasis", "LUNG"),
    ("Calcification", "LUNG"),
    ("Consolidation", "LUNG"),
    ("Diffusive Nodule", "LUNG"),
    ("Emphysema", "LUNG"),
    ("Fibrosis", "LUNG"),
    ("Fracture", "LUNG"),
    ("Mass", "LUNG"),
    ("Nodule", "LUNG"),
    ("Effusion", "PLEURA"),
    ("Pleural Thickening", "PLEURA"),
    ("Pneumothorax", "PLEURA"),
    ("Cardiomegaly", "MEDIASTINUM"),
)
CANONICAL_CATEGORIES = tuple(name for name, _ in CATEGORY_TABLE)
PARENT_CLASSES = ("LUNG", "PLEURA", "MEDIASTINUM")
PARENT_OF = dict(CATEGORY_TABLE)


@dataclass(frozen=True)
class ImageRecord:
    id: int
    width: int
    height: int
    file_name: str = ""

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise AnnotationError(f"image {self.id}: non-positive extents "
                                  f"{self.width}x{self.height}")


@dataclass(frozen=True)
class CategoryRecord:
    id: int
    name: str
    parent: str

    def __post_init__(self):
        if self.parent not in PARENT_CLASSES:
            raise AnnotationError(
                f"category {self.name!r}: unknown parent {self.parent!r} "
                f"(expected one of {PARENT_CLASSES})"
            )


@dataclass(frozen=True)
class Instance:
    """One annotated or detected box; detections carry a score."""

    image_id: int
    category_id: int
    box: Box
    polygon: tuple[tuple[float, float], ...] | None = None
    score: float | None = None

    def __post_init__(self):
        if self.polygon is not None:
            poly = tuple((float(x), float(y)) for x, y in self.polygon)
            if len(poly) < 3:
                raise AnnotationError(
                    f"instance on image {self.image_id}: polygon needs >= 3 "
                    f"vertices, got {len(poly)}"
                )
            object.__setattr__(self, "polygon", poly)
        if self.score is not None and not np.isfinite(self.score):
            raise AnnotationError(
                f"instance on image {self.image_id}: non-finite score {self.score}"
            )


@dataclass(frozen=True)
class AnnotationSet:
    """Validated images/categories/instances tables for one split."""

    images: tuple[ImageRecord, ...]
    categories: tuple[CategoryRecord, ...]
    instances: tuple[Instance, ...]

    def __post_init__(self):
        object.__setattr__(self, "images", tuple(self.images))
        object.__setattr__(self, "categories", tuple(self.categories))
        object.__setattr__(self, "instances", tuple(self.instances))
        image_ids = [im.id for im in self.images]
        if len(set(image_ids)) != len(image_ids):
            raise AnnotationError("duplicate image ids")
        cat_ids = [c.id for c in self.categories]
        if len(set(cat_ids)) != len(cat_ids):
            raise AnnotationError("duplicate category ids")
        if len({c.name for c in self.categories}) != len(cat_ids):
            raise AnnotationError("duplicate category names")
        by_image = {im.id: im for im in self.images}
        known_cats = set(cat_ids)
        for k, inst in enumerate(self.instances):
            if inst.image_id not in by_image:
                raise AnnotationError(
                    f"instances[{k}]: unknown image id {inst.image_id}"
                )
            if inst.category_id not in known_cats:
                raise AnnotationError(
                    f"instances[{k}]: unknown category id {inst.category_id}"
                )
            im = by_image[inst.image_id]
            b = inst.box
            if b.x1 < 0 or b.y1 < 0 or b.x2 > im.width or b.y2 > im.height:
                raise AnnotationError(
                    f"instances[{k}]: box {b} exceeds image {im.id} bounds "
                    f"{im.width}x{im.height}"
                )

    # -- lookups ---------------------------------------------------------

    def sorted_categories(self) -> tuple[CategoryRecord, ...]:
        return tuple(sorted(self.categories, key=lambda c: c.id))

    def category_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.sorted_categories())

    def category_position(self) -> dict[int, int]:
        """Category id -> dense 0-based position in id order."""
        return {c.id: k for k, c in enumerate(self.sorted_categories())}

    def sorted_images(self) -> tuple[ImageRecord, ...]:
        return tuple(sorted(self.images, key=lambda im: im.id))

    def presence_sets(self) -> list[frozenset[int]]:
        """Per image (ascending id), the set of category positions present."""
        pos = self.category_position()
        by_image: dict[int, set[int]] = {im.id: set() for im in self.images}
        for inst in self.instances:
            by_image[inst.image_id].add(pos[inst.category_id])
        return [frozenset(by_image[im.id]) for im in self.sorted_images()]

    def require_canonical(self) -> None:
        names = self.category_names()
        if names != CANONICAL_CATEGORIES:
            raise AnnotationError(
                f"categories {names} do not match the canonical thirteen "
                f"{CANONICAL_CATEGORIES}"
            )
        for c in self.categories:
            if c.parent != PARENT_OF[c.name]:
                raise AnnotationError(
                    f"category {c.name!r} has parent {c.parent!r}, expected "
                    f"{PARENT_OF[c.name]!r}"
                )

    # -- serialization ---------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "images": [
                {"id": im.id, "width": im.width, "height": im.height,
                 "file_name": im.file_name}
                for im in self.sorted_images()
            ],
            "categories": [
                {"id": c.id, "name": c.name, "parent": c.parent}
                for c in self.sorted_categories()
            ],
            "annotations": [_instance_to_json(inst) for inst in self.instances],
        }


def _instance_to_json(inst: Instance) -> dict:
    b = inst.box
    rec = {
        "image_id": inst.image_id,
        "category_id": inst.category_id,
        "bbox": [b.x1, b.y1, b.width, b.height],
    }
    if inst.polygon is not None:
        flat: list[float] = []
        for x, y in inst.polygon:
            flat.extend([x, y])
        rec["segmentation"] = [flat]
    if inst.score is not None:
        rec["score"] = inst.score
    return rec


def _instance_from_json(rec: dict, where: str) -> Instance:
    for key in ("image_id", "category_id", "bbox"):
        if key not in rec:
            raise AnnotationError(f"{where}: missing {key!r}")
    bbox = rec["bbox"]
    if len(bbox) != 4:
        raise AnnotationError(f"{where}: bbox must have 4 entries, got {bbox}")
    x, y, w, h = (float(v) for v in bbox)
    if w <= 0 or h <= 0:
        raise AnnotationError(f"{where}: degenerate bbox {bbox}")
    polygon = None
    if rec.get("segmentation"):
        flat = rec["segmentation"][0]
        if len(flat) < 6 or len(flat) % 2:
            raise AnnotationError(
                f"{where}: segmentation needs >= 3 (x, y) vertex pairs"
            )
        polygon = tuple(zip(flat[0::2], flat[1::2]))
    try:
        return Instance(
            image_id=int(rec["image_id"]),
            category_id=int(rec["category_id"]),
            box=Box(x, y, x + w, y + h),
            polygon=polygon,
            score=float(rec["score"]) if "score" in rec else None,
        )
    except (AnnotationError, ValueError) as exc:
        raise AnnotationError(f"{where}: {exc}") from exc


def load_annotations(path: str, canonical: bool = True) -> AnnotationSet:
    """Parse and fully validate an annotation file.

    With ``canonical`` (the default) the declared categories must be exactly
    the thirteen canonical ones with their Table parents.
    """
    doc = load_json(path)
    if not isinstance(doc, dict):
        raise AnnotationError(f"{path}: expected a JSON object")
    for key in ("images", "categories", "annotations"):
        if key not in doc:
            raise AnnotationError(f"{path}: missing top-level {key!r} table")
    images = []
    for k, rec in enumerate(doc["images"]):
        try:
            images.append(ImageRecord(
                id=int(rec["id"]), width=int(rec["width"]),
                height=int(rec["height"]), file_name=rec.get("file_name", ""),
            ))
        except (KeyError, AnnotationError, ValueError) as exc:
            raise AnnotationError(f"{path}: images[{k}]: {exc}") from exc
    categories = []
    for k, rec in enumerate(doc["categories"]):
        try:
            categories.append(CategoryRecord(
                id=int(rec["id"]), name=str(rec["name"]),
                parent=str(rec.get("parent", rec.get("supercategory", ""))),
            ))
        except (KeyError, AnnotationError) as exc:
            raise AnnotationError(f"{path}: categories[{k}]: {exc}") from exc
    instances = [
        _instance_from_json(rec, f"{path}: annotations[{k}]")
        for k, rec in enumerate(doc["annotations"])
    ]
    try:
        ann = AnnotationSet(tuple(images), tuple(categories), tuple(instances))
    except AnnotationError as exc:
        raise AnnotationError(f"{path}: {exc}") from exc
    if canonical:
        ann.require_canonical()
    return ann


def save_annotations(path: str, ann: AnnotationSet) -> None:
    dump_json(path, ann.to_json_dict())


def canonical_categories() -> tuple[CategoryRecord, ...]:
    return tuple(
        CategoryRecord(id=k + 1, name=name, parent=parent)
        for k, (name, parent) in enumerate(CATEGORY_TABLE)
    )


def load_chestx_det(path: str, image_size: tuple[int, int] = (1024, 1024)
                    ) -> tuple[AnnotationSet, dict[str, int]]:
    """Adapter for the public ChestX-Det release files.

    The release stores one record per image with parallel ``syms`` /
    ``boxes`` / ``polygons`` lists and no image table, so sizes default to
    the NIH 1024x1024 rasters.  Returns the converted set plus a per-category
    count of raw instances whose boxes had to be clamped or dropped; callers
    comparing against published statistics should report those rather than
    reconcile them silently.
    """
    doc = load_json(path)
    if not isinstance(doc, list):
        raise AnnotationError(f"{path}: expected the release's list-of-images form")
    width, height = image_size
    categories = canonical_categories()
    id_of = {c.name: c.id for c in categories}
    images, instances = [], []
    problems: dict[str, int] = {}
    for k, rec in enumerate(doc):
        image_id = k + 1
        images.append(ImageRecord(id=image_id, width=width, height=height,
                                  file_name=rec.get("file_name", "")))
        syms = rec.get("syms", [])
        boxes = rec.get("boxes", [])
        polys = rec.get("polygons", [])
        for j, name in enumerate(syms):
            name = str(name).replace("_", " ")
            if name not in id_of:
                raise AnnotationError(f"{path}: images[{k}]: unknown category {name!r}")
            x1, y1, x2, y2 = (float(v) for v in boxes[j])
            cx1, cy1 = max(x1, 0.0), max(y1, 0.0)
            cx2, cy2 = min(x2, float(width)), min(y2, float(height))
            if (cx1, cy1, cx2, cy2) != (x1, y1, x2, y2):
                problems[name] = problems.get(name, 0) + 1
            if cx1 >= cx2 or cy1 >= cy2:
                problems[name] = problems.get(name, 0) + 1
                continue
            polygon = None
            if j < len(polys) and len(polys[j]) >= 3:
                polygon = tuple((float(x), float(y)) for x, y in polys[j])
            instances.append(Instance(
                image_id=image_id, category_id=id_of[name],
                box=Box(cx1, cy1, cx2, cy2), polygon=polygon,
            ))
    ann = AnnotationSet(tuple(images), categories, tuple(instances))
    ann.require_canonical()
    return ann, problems


def load_detections(path: str, ann: AnnotationSet) -> tuple[Instance, ...]:
    """Read a detection file (flat JSON list of scored records)."""
    doc = load_json(path)
    if not isinstance(doc, list):
        raise AnnotationError(f"{path}: expected a JSON list of detections")
    dets = []
    for k, rec in enumerate(doc):
        if "score" not in rec:
            raise AnnotationError(f"{path}: detections[{k}]: missing 'score'")
        dets.append(_instance_from_json(rec, f"{path}: detections[{k}]"))
    known_images = {im.id for im in ann.images}
    known_cats = {c.id for c in ann.categories}
    for k, det in enumerate(dets):
        if det.image_id not in known_images:
            raise AnnotationError(f"{path}: detections[{k}]: unknown image id "
                                  f"{det.image_id}")
        if det.category_id not in known_cats:
            raise AnnotationError(f"{path}: detections[{k}]: unknown category id "
                                  f"{det.category_id}")
    return tuple(dets)


def save_detections(path: str, dets) -> None:
    dump_json(path, [_instance_to_json(d) for d in dets])


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DatasetStats:
    """Per-category counts for one split, in category id order."""

    categories: tuple[str, ...]
    parents: tuple[str, ...]
    instance_counts: np.ndarray
    image_counts: np.ndarray
    cooccurrence: np.ndarray
    n_images: int

    def format_table(self, with_parents: bool = False) -> str:
        lines = [f"{'category':<20} {'instances':>9} {'images':>7}"]
        for k, name in enumerate(self.categories):
            lines.append(
                f"{name:<20} {int(self.instance_counts[k]):>9} "
                f"{int(self.image_counts[k]):>7}"
            )
        lines.append(
            f"{'total':<20} {int(self.instance_counts.sum()):>9} "
            f"{self.n_images:>7}"
        )
        if with_parents:
            lines.append("")
            lines.append(f"{'parent class':<20} {'instances':>9}")
            for parent in PARENT_CLASSES:
                total = sum(
                    int(self.instance_counts[k])
                    for k, p in enumerate(self.parents) if p == parent
                )
                lines.append(f"{parent:<20} {total:>9}")
        return "\n".join(lines)


def stats(ann: AnnotationSet) -> DatasetStats:
    """Count instances, images, and image-level co-occurrence per category.

    Counting is a direct per-image pass over category sets, independent of
    the vectorized co-occurrence kernel in :mod:`chestrel.disease`.
    """
    cats = ann.sorted_categories()
    pos = ann.category_position()
    n = len(cats)
    instance_counts = np.zeros(n, dtype=np.int64)
    image_counts = np.zeros(n, dtype=np.int64)
    cooccurrence = np.zeros((n, n), dtype=np.int64)
    per_image: dict[int, set[int]] = {im.id: set() for im in ann.images}
    for inst in ann.instances:
        instance_counts[pos[inst.category_id]] += 1
        per_image[inst.image_id].add(pos[inst.category_id])
    for im in ann.sorted_images():
        present = sorted(per_image[im.id])
        for a in present:
            image_counts[a] += 1
            for b in present:
                cooccurrence[a, b] += 1
    return DatasetStats(
        categories=tuple(c.name for c in cats),
        parents=tuple(c.parent for c in cats),
        instance_counts=instance_counts,
        image_counts=image_counts,
        cooccurrence=cooccurrence,
        n_images=len(ann.images),
    )


# ---------------------------------------------------------------------------
# Synthetic corpus
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticCorpus:
    """A generated split plus the generator's own independent bookkeeping."""

    annotations: AnnotationSet
    parts: dict[int, AnatomicalParts]
    instance_counts: np.ndarray = field(repr=False, default=None)
    image_counts: np.ndarray = field(repr=False, default=None)
    cooccurrence: np.ndarray = field(repr=False, default=None)


def _synth_parts(rng: np.random.Generator, width: int, height: int
                 ) -> AnatomicalParts:
    sx, sy = width / 1024.0, height / 1024.0
    u = rng.uniform
    left = Box(u(60, 120) * sx, u(150, 260) * sy, u(400, 470) * sx, u(720, 880) * sy)
    right = Box(u(550, 620) * sx, u(150, 260) * sy, u(900, 960) * sx, u(720, 880) * sy)
    lsc = Box(max(left.x1 - u(10, 40) * sx, 1.0), max(left.y1 - u(20, 60) * sy, 1.0),
              left.x1 + u(80, 150) * sx, left.y1 + u(150, 260) * sy)
    rsc = Box(right.x2 - u(80, 150) * sx, max(right.y1 - u(20, 60) * sy, 1.0),
              min(right.x2 + u(10, 40) * sx, width - 1.0),
              right.y1 + u(150, 260) * sy)
    heart = Box(u(380, 440) * sx, u(520, 610) * sy, u(600, 680) * sx, u(800, 900) * sy)
    return AnatomicalParts(left, right, lsc, rsc, heart)


def _synth_box(rng: np.random.Generator, parent: str, parts: AnatomicalParts,
               width: int, height: int) -> Box:
    lung = parts.left_lung if rng.uniform() < 0.5 else parts.right_lung
    if parent == "MEDIASTINUM":
        h = parts.heart
        grow = rng.uniform(0.0, 0.15)
        return Box(max(h.x1 - grow * h.width, 0.0), max(h.y1 - grow * h.height, 0.0),
                   min(h.x2 + grow * h.width, width), min(h.y2 + grow * h.height, height))
    if parent == "PLEURA":
        # A strip hugging one lung edge.
        edge = rng.integers(0, 4)
        t = rng.uniform(0.1, 0.3)
        if edge == 0:    # bottom
            return Box(lung.x1, lung.y2 - t * lung.height, lung.x2, lung.y2)
        if edge == 1:    # top
            return Box(lung.x1, lung.y1, lung.x2, lung.y1 + t * lung.height)
        if edge == 2:    # outer-left
            return Box(lung.x1, lung.y1, lung.x1 + t * lung.width, lung.y2)
        return Box(lung.x2 - t * lung.width, lung.y1, lung.x2, lung.y2)
    # LUNG: a sub-box strictly inside one lung field.
    w = rng.uniform(0.15, 0.5) * lung.width
    h = rng.uniform(0.15, 0.5) * lung.height
    x1 = rng.uniform(lung.x1, lung.x2 - w)
    y1 = rng.uniform(lung.y1, lung.y2 - h)
    return Box(x1, y1, x1 + w, y1 + h)


def _synth_polygon(rng: np.random.Generator, box: Box
                   ) -> tuple[tuple[float, float], ...]:
    if rng.uniform() < 0.5:  # the box rectangle itself
        return ((box.x1, box.y1), (box.x2, box.y1), (box.x2, box.y2), (box.x1, box.y2))
    cx, cy = (box.x1 + box.x2) / 2, (box.y1 + box.y2) / 2
    return ((cx, box.y1), (box.x2, cy), (cx, box.y2), (box.x1, cy))


def synth_corpus(seed: int, n_images: int, category_priors=None,
                 cooccurrence_strength: float = 0.0,
                 image_size: tuple[int, int] = (1024, 1024)) -> SyntheticCorpus:
    """Generate a reproducible annotated corpus with the canonical taxonomy.

    ``category_priors`` gives the base presence probability per category
    (scalar or length-13, default 0.3).  A per-image severity draw scales
    every category's probability by ``1 + strength * (2*severity - 1)``, so
    a positive ``cooccurrence_strength`` couples categories within an image.
    All randomness flows through one generator in a fixed order, making the
    output bitwise-identical for identical arguments.
    """
    if n_images < 1:
        raise ValueError(f"n_images must be >= 1, got {n_images}")
    n_cats = len(CATEGORY_TABLE)
    if category_priors is None:
        priors = np.full(n_cats, 0.3)
    else:
        priors = np.broadcast_to(np.asarray(category_priors, dtype=np.float64),
                                 (n_cats,)).copy()
    if np.any(priors < 0) or np.any(priors > 1):
        raise ValueError("category_priors must lie in [0, 1]")
    width, height = image_size
    rng = np.random.default_rng(seed)
    categories = canonical_categories()
    images, instances, parts_by_image = [], [], {}
    instance_counts = np.zeros(n_cats, dtype=np.int64)
    image_counts = np.zeros(n_cats, dtype=np.int64)
    cooccurrence = np.zeros((n_cats, n_cats), dtype=np.int64)
    for i in range(n_images):
        image_id = i + 1
        images.append(ImageRecord(id=image_id, width=width, height=height,
                                  file_name=f"synth_{image_id:05d}.png"))
        parts = _synth_parts(rng, width, height)
        parts_by_image[image_id] = parts
        severity = rng.uniform()
        prob = np.clip(priors * (1.0 + cooccurrence_strength * (2 * severity - 1)),
                       0.0, 1.0)
        present = np.flatnonzero(rng.uniform(size=n_cats) < prob)
        for k in present:
            n_inst = int(rng.integers(1, 4))
            for _ in range(n_inst):
                box = _synth_box(rng, categories[k].parent, parts, width, height)
                instances.append(Instance(
                    image_id=image_id, category_id=categories[k].id, box=box,
                    polygon=_synth_polygon(rng, box),
                ))
                instance_counts[k] += 1
        image_counts[present] += 1
        for a in present:
            cooccurrence[a, present] += 1
    ann = AnnotationSet(tuple(images), categories, tuple(instances))
    return SyntheticCorpus(
        annotations=ann, parts=parts_by_image,
        instance_counts=instance_counts, image_counts=image_counts,
        cooccurrence=cooccurrence,
    )


def synth_detections(ann: AnnotationSet, seed: int, miss_rate: float = 0.2,
                     fp_per_image: float = 0.5, jitter: float = 0.1
                     ) -> tuple[Instance, ...]:
    """Perturb ground truth into a plausible, reproducible detection list.

    Each kept ground-truth box is jittered by up to ``jitter`` of its size
    and scored in [0.5, 1); false positives are random in-image boxes of a
    random category scored in [0.05, 0.7).
    """
    rng = np.random.default_rng(seed)
    by_image = {im.id: im for im in ann.images}
    cat_ids = [c.id for c in ann.sorted_categories()]
    dets: list[Instance] = []
    for inst in ann.instances:
        if rng.uniform() < miss_rate:
            continue
        b = inst.box
        im = by_image[inst.image_id]
        dx = rng.uniform(-jitter, jitter) * b.width
        dy = rng.uniform(-jitter, jitter) * b.height
        ds = 1.0 + rng.uniform(-jitter, jitter)
        w2, h2 = b.width * ds / 2, b.height * ds / 2
        cx, cy = (b.x1 + b.x2) / 2 + dx, (b.y1 + b.y2) / 2 + dy
        box = Box(max(cx - w2, 0.0), max(cy - h2, 0.0),
                  min(cx + w2, im.width), min(cy + h2, im.height))
        dets.append(Instance(
            image_id=inst.image_id, category_id=inst.category_id, box=box,
            polygon=_synth_polygon(rng, box), score=float(rng.uniform(0.5, 1.0)),
        ))
    for im in ann.sorted_images():
        n_fp = int(rng.poisson(fp_per_image))
        for _ in range(n_fp):
            w = rng.uniform(0.05, 0.3) * im.width
            h = rng.uniform(0.05, 0.3) * im.height
            x1 = rng.uniform(0, im.width - w)
            y1 = rng.uniform(0, im.height - h)
            box = Box(x1, y1, x1 + w, y1 + h)
            dets.append(Instance(
                image_id=im.id, category_id=int(rng.choice(cat_ids)), box=box,
                polygon=_synth_polygon(rng, box),
                score=float(rng.uniform(0.05, 0.7)),
            ))
    return tuple(dets)


def synth_image_features(seed: int, n_r: int, n_d: int = 7, d_m: int = 256,
                         d_a: int = 1024, n_categories: int = 13,
                         d_global: int = 256, stddev: float = 0.1) -> dict:
    """Reproducible stand-in features for one image's pipeline run.

    Returns proposal features ``f_a``, left/right grid features, per-proposal
    class probabilities (softmax rows), and a pooled global feature.  These
    substitute for a backbone, which is outside this package's scope.
    """
    rng = np.random.default_rng(seed)
    logits = rng.normal(size=(n_r, n_categories))
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    return {
        "f_a": stddev * rng.standard_normal((n_r, d_a)),
        "grid_left": stddev * rng.standard_normal((n_d * n_d, d_m)),
        "grid_right": stddev * rng.standard_normal((n_d * n_d, d_m)),
        "class_probs": e / e.sum(axis=1, keepdims=True),
        "global_feature": stddev * rng.standard_normal(d_global),
    }
