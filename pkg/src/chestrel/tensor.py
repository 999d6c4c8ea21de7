"""Dense float64 array substrate.

Every kernel in this package works on plain C-order float64 ndarrays; this
module collects the handful of primitive operations they share (validated
matrix product, max-subtracted softmax, seeded Gaussian initialization,
elementwise nonlinearities, concatenation) together with the on-disk tensor
format: a JSON document with a ``shape`` list and a flat row-major ``data``
list.

All functions are pure and never mutate their inputs; randomness always
enters through an explicit seed.
"""

from __future__ import annotations

import numpy as np

from ._io import dump_json, load_json
from .exceptions import DegenerateDistributionError, ShapeError
from .validation import as_float_array, check_matmul_shapes

__all__ = [
    "matmul",
    "softmax_stable",
    "softmax_rows",
    "gaussian_init",
    "relu",
    "sigmoid",
    "concat_last_axis",
    "save_tensor",
    "load_tensor",
    "save_named_tensors",
    "load_named_tensors",
]


def matmul(a, b) -> np.ndarray:
    """Matrix product of two 2-d arrays with explicit shape checking."""
    a = as_float_array(a, "a", ndim=2)
    b = as_float_array(b, "b", ndim=2)
    check_matmul_shapes(a, b)
    return a @ b


def softmax_stable(logits) -> np.ndarray:
    """Max-subtracted softmax over a 1-d logit vector.

    Entries may be -inf (they map to exactly 0); if every entry is -inf the
    distribution is undefined and :class:`DegenerateDistributionError` is
    raised.  Output is nonnegative and sums to 1 within 1e-12.
    """
    x = as_float_array(logits, "logits", ndim=1, allow_inf=True)
    if x.size == 0:
        raise ShapeError("logits: must contain at least one entry")
    if np.all(np.isneginf(x)):
        raise DegenerateDistributionError("all logits are -inf")
    if np.isposinf(x).any():
        raise ValueError("logits: +inf entries are not supported")
    shifted = x - np.max(x)
    e = np.exp(shifted)
    return e / e.sum()


def softmax_rows(logits) -> np.ndarray:
    """Row-wise :func:`softmax_stable` for a 2-d logit array.

    Raises :class:`DegenerateDistributionError` naming the first offending
    row if any row is entirely -inf.
    """
    x = as_float_array(logits, "logits", ndim=2, allow_inf=True)
    if x.shape[1] == 0:
        raise ShapeError("logits: rows must contain at least one entry")
    if np.isposinf(x).any():
        raise ValueError("logits: +inf entries are not supported")
    all_masked = np.all(np.isneginf(x), axis=1)
    if all_masked.any():
        raise DegenerateDistributionError(
            f"row {int(np.flatnonzero(all_masked)[0])} has all logits -inf"
        )
    shifted = x - np.max(x, axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def gaussian_init(shape, seed: int, stddev: float) -> np.ndarray:
    """Seeded zero-mean Gaussian tensor; identical output for identical seeds."""
    if stddev <= 0:
        raise ValueError(f"stddev must be positive, got {stddev}")
    rng = np.random.default_rng(seed)
    return stddev * rng.standard_normal(size=tuple(shape), dtype=np.float64)


def relu(x) -> np.ndarray:
    return np.maximum(as_float_array(x, "x"), 0.0)


def sigmoid(x) -> np.ndarray:
    """Numerically stable logistic function, evaluated branch-wise."""
    x = as_float_array(x, "x")
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def concat_last_axis(arrays) -> np.ndarray:
    """Concatenate along the last axis; leading extents must agree.

    Preserves the row count and sums the trailing extents.
    """
    if len(arrays) == 0:
        raise ShapeError("concat_last_axis: need at least one array")
    coerced = [as_float_array(a, f"arrays[{i}]") for i, a in enumerate(arrays)]
    lead = coerced[0].shape[:-1]
    for i, a in enumerate(coerced):
        if a.shape[:-1] != lead:
            raise ShapeError(
                f"concat_last_axis: arrays[{i}] has leading shape {a.shape[:-1]}, "
                f"expected {lead}"
            )
    return np.concatenate(coerced, axis=-1)


def save_tensor(path: str, array) -> None:
    """Write an array as a JSON tensor document (shape + flat row-major data)."""
    arr = as_float_array(array, "array")
    dump_json(path, {"shape": list(arr.shape), "data": arr.ravel(order="C").tolist()})


def _decode_tensor_entry(entry, where: str) -> np.ndarray:
    if not isinstance(entry, dict) or "shape" not in entry or "data" not in entry:
        raise ShapeError(f"{where}: not a tensor document (needs 'shape' and 'data')")
    shape = tuple(int(s) for s in entry["shape"])
    if any(s < 0 for s in shape):
        raise ShapeError(f"{where}: negative extent in shape {shape}")
    data = np.asarray(entry["data"], dtype=np.float64)
    expected = int(np.prod(shape)) if shape else 1
    if data.size != expected:
        raise ShapeError(
            f"{where}: data length {data.size} does not match shape {shape} "
            f"(expected {expected})"
        )
    return data.reshape(shape)


def load_tensor(path: str) -> np.ndarray:
    """Read a JSON tensor document, rejecting shape/data length mismatches."""
    return _decode_tensor_entry(load_json(path), path)


def save_named_tensors(path: str, arrays: dict) -> None:
    """Write several tensors into one document keyed by name."""
    payload = {}
    for name, array in arrays.items():
        arr = as_float_array(array, name)
        payload[name] = {"shape": list(arr.shape),
                         "data": arr.ravel(order="C").tolist()}
    dump_json(path, payload)


def load_named_tensors(path: str, names) -> dict[str, np.ndarray]:
    """Read the named tensors from a multi-tensor document."""
    doc = load_json(path)
    if not isinstance(doc, dict):
        raise ShapeError(f"{path}: expected a mapping of tensor names")
    out = {}
    for name in names:
        if name not in doc:
            raise ShapeError(f"{path}: missing tensor {name!r}")
        out[name] = _decode_tensor_entry(doc[name], f"{path}:{name}")
    return out
