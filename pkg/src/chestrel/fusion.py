"""Feature fusion layout and parameter accounting.

Per-proposal features concatenate in a fixed block order: appearance,
spatial relation, contextual relation, category relation.  Fusing records
the block widths in a layout descriptor so slicing the fused array at the
recorded offsets recovers each input bitwise.  Any block may be absent
(width zero).

The parameter report counts learnable elements of the three relation
modules from their weight tensors.  It also quotes reference increments
measured on a full detector integration; those include integration layers
(resized heads, extra convolutions) outside this package's scope, so the
two columns are expected to differ and are shown side by side rather than
reconciled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ShapeError
from .validation import as_float_array

__all__ = [
    "BLOCK_ORDER",
    "REFERENCE_INCREMENTS",
    "FeatureLayout",
    "FusedFeatures",
    "ParamCountReport",
    "fuse",
    "split",
    "param_count",
]

BLOCK_ORDER = ("appearance", "spatial", "contextual", "category")

# Published whole-detector parameter increments (millions), including
# integration layers that are not part of the standalone kernels here.
REFERENCE_INCREMENTS = {"spatial": 0.09, "contextual": 3.29, "category": 0.57}


@dataclass(frozen=True)
class FeatureLayout:
    """Widths of the four fused blocks, in their concatenation order."""

    appearance: int = 1024
    spatial: int = 640
    contextual: int = 1024
    category: int = 256

    def __post_init__(self):
        for name in BLOCK_ORDER:
            width = int(getattr(self, name))
            if width < 0:
                raise ValueError(f"{name} width must be >= 0, got {width}")
            object.__setattr__(self, name, width)

    @property
    def total(self) -> int:
        return sum(getattr(self, name) for name in BLOCK_ORDER)

    def widths(self) -> tuple[int, ...]:
        return tuple(getattr(self, name) for name in BLOCK_ORDER)

    def offsets(self) -> tuple[int, ...]:
        """Start offset of each block within a fused row."""
        starts, at = [], 0
        for width in self.widths():
            starts.append(at)
            at += width
        return tuple(starts)

    def slices(self) -> dict[str, slice]:
        return {
            name: slice(start, start + width)
            for name, start, width in zip(BLOCK_ORDER, self.offsets(), self.widths())
        }

    def to_json_dict(self) -> dict:
        return {
            "order": list(BLOCK_ORDER),
            "widths": {name: getattr(self, name) for name in BLOCK_ORDER},
            "offsets": dict(zip(BLOCK_ORDER, self.offsets())),
            "total": self.total,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "FeatureLayout":
        widths = doc.get("widths")
        if not isinstance(widths, dict):
            raise ShapeError("layout document is missing its 'widths' table")
        missing = [name for name in BLOCK_ORDER if name not in widths]
        if missing:
            raise ShapeError(f"layout widths are missing {missing}")
        return cls(**{name: int(widths[name]) for name in BLOCK_ORDER})


@dataclass(frozen=True)
class FusedFeatures:
    """Concatenated per-proposal features plus the layout that cuts them."""

    f_prime: np.ndarray
    layout: FeatureLayout

    def __post_init__(self):
        object.__setattr__(self, "f_prime",
                           as_float_array(self.f_prime, "f_prime", ndim=2))
        if self.f_prime.shape[1] != self.layout.total:
            raise ShapeError(
                f"fused width {self.f_prime.shape[1]} does not match layout "
                f"total {self.layout.total}"
            )

    @property
    def n_rows(self) -> int:
        return self.f_prime.shape[0]

    def block(self, name: str) -> np.ndarray:
        if name not in BLOCK_ORDER:
            raise KeyError(f"unknown block {name!r}; expected one of {BLOCK_ORDER}")
        return self.f_prime[:, self.layout.slices()[name]].copy()

    def split(self) -> dict[str, np.ndarray]:
        return {name: self.block(name) for name in BLOCK_ORDER}


def _as_block(value, name: str, n: int | None) -> tuple[np.ndarray | None, int]:
    if value is None:
        return None, 0
    arr = as_float_array(value, name, ndim=2)
    if n is not None and arr.shape[0] != n:
        raise ShapeError(f"{name} block has {arr.shape[0]} rows, expected {n}")
    return arr, arr.shape[1]


def fuse(f=None, f_spa=None, f_cxt=None, f_cate=None) -> FusedFeatures:
    """Concatenate the four feature blocks in their fixed order.

    Blocks passed as None (or with zero columns) contribute nothing; the
    returned layout records each block's width and offset, and slicing at
    those offsets recovers the inputs bitwise.
    """
    n = None
    blocks: dict[str, np.ndarray | None] = {}
    widths: dict[str, int] = {}
    for name, value in zip(BLOCK_ORDER, (f, f_spa, f_cxt, f_cate)):
        arr, width = _as_block(value, name, n)
        if arr is not None and n is None:
            n = arr.shape[0]
        blocks[name], widths[name] = arr, width
    if n is None:
        raise ShapeError("no feature blocks given")
    layout = FeatureLayout(**widths)
    f_prime = np.empty((n, layout.total), dtype=np.float64)
    for name, sl in layout.slices().items():
        if blocks[name] is not None:
            f_prime[:, sl] = blocks[name]
    return FusedFeatures(f_prime=f_prime, layout=layout)


def split(fused: FusedFeatures) -> dict[str, np.ndarray]:
    """Recover the four blocks; exact inverse of :func:`fuse`."""
    return fused.split()


@dataclass(frozen=True)
class ParamCountReport:
    """Analytic element counts beside published whole-detector increments."""

    modules: dict[str, int]
    reference_increments: dict[str, float]

    @property
    def total(self) -> int:
        return sum(self.modules.values())

    def format_table(self) -> str:
        lines = [
            f"{'module':<12} {'elements':>12} {'reference (M, full detector)':>30}"
        ]
        for name, count in self.modules.items():
            ref = self.reference_increments.get(name)
            ref_text = f"{ref:.2f}" if ref is not None else "-"
            lines.append(f"{name:<12} {count:>12,} {ref_text:>30}")
        lines.append(f"{'total':<12} {self.total:>12,}")
        lines.append(
            "note: reference increments were measured on a full detector and "
            "include integration layers not modeled here."
        )
        return "\n".join(lines)


def param_count(context_params=None, disease_params=None) -> ParamCountReport:
    """Learnable element counts of the three relation modules.

    The spatial module is a fixed sinusoidal encoding and always counts 0.
    With default extents the contextual module has 1,572,868 elements
    (W_a 1024x1024 + W_g 256x1024 + W_s 1x4 + W_k 256x1024) and the
    category module 278,784 (W_emb 13x1024 + W_t 1024x256 + W_cls 256x13).
    Params passed as None count 0.
    """
    modules = {
        "spatial": 0,
        "contextual": context_params.element_count() if context_params else 0,
        "category": disease_params.element_count() if disease_params else 0,
    }
    return ParamCountReport(modules=modules,
                            reference_increments=dict(REFERENCE_INCREMENTS))
