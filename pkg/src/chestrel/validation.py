"""Input validation helpers.

All public entry points funnel array-likes through :func:`as_float_array`
so that downstream kernels can assume finite, C-contiguous float64 data.
"""

from __future__ import annotations

import numpy as np

from .exceptions import ShapeError

__all__ = ["as_float_array", "check_finite", "check_matmul_shapes", "as_box_array"]


def as_float_array(x, name: str = "array", ndim: int | None = None,
                   shape: tuple | None = None, allow_inf: bool = False) -> np.ndarray:
    """Coerce ``x`` to a C-contiguous float64 ndarray and validate it.

    ``shape`` entries of ``None`` act as wildcards.  Non-finite entries are
    rejected unless ``allow_inf`` is set (NaN is never allowed).
    """
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise ShapeError(f"{name}: expected {ndim} dimensions, got shape {arr.shape}")
    if shape is not None:
        if arr.ndim != len(shape):
            raise ShapeError(f"{name}: expected shape {shape}, got {arr.shape}")
        for want, got in zip(shape, arr.shape):
            if want is not None and want != got:
                raise ShapeError(f"{name}: expected shape {shape}, got {arr.shape}")
    if allow_inf:
        if np.isnan(arr).any():
            raise ValueError(f"{name}: contains NaN")
    else:
        check_finite(arr, name)
    return arr


def check_finite(arr: np.ndarray, name: str = "array") -> None:
    if not np.isfinite(arr).all():
        raise ValueError(f"{name}: contains non-finite entries")


def check_matmul_shapes(a: np.ndarray, b: np.ndarray) -> None:
    """Inner extents must agree; error names both shapes."""
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(
            f"matmul expects 2-d operands, got shapes {a.shape} and {b.shape}"
        )
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"matmul shape mismatch: {a.shape} x {b.shape} (inner extents differ)"
        )


def as_box_array(boxes, name: str = "boxes") -> np.ndarray:
    """Coerce to an (n, 4) corner-coordinate array of valid boxes.

    Accepts an (n, 4) array-like or a sequence of objects with
    x1/y1/x2/y2 attributes.  Every box must satisfy x1 < x2 and y1 < y2.
    """
    if hasattr(boxes, "__len__") and len(boxes) > 0 and hasattr(boxes[0], "x1"):
        boxes = [(b.x1, b.y1, b.x2, b.y2) for b in boxes]
    arr = np.ascontiguousarray(boxes, dtype=np.float64)
    if arr.ndim == 1 and arr.size == 0:
        return arr.reshape(0, 4)
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise ShapeError(f"{name}: expected shape (n, 4), got {arr.shape}")
    check_finite(arr, name)
    if np.any(arr[:, 0] >= arr[:, 2]) or np.any(arr[:, 1] >= arr[:, 3]):
        bad = int(np.flatnonzero((arr[:, 0] >= arr[:, 2]) | (arr[:, 1] >= arr[:, 3]))[0])
        raise ValueError(f"{name}[{bad}]: degenerate box (requires x1 < x2 and y1 < y2)")
    return arr
