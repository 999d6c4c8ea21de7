"""Certification of analytic gradients against central finite differences.

Each module fixture bundles small random inputs, weights, and a cotangent;
the scalar objective is the cotangent-weighted sum of the module output.
Every coordinate of every parameter is probed with a symmetric step and the
relative error |a - n| / max(1e-8, |a|, |n|) is reported per parameter with
its worst coordinate.

The attention module's prior is a ReLU, so its objective has kinks.  These
are handled by rejection, not smoothing: a fixture whose raw prior lands
within 1e-7 of zero is refused outright, and the generators apply a much
wider margin (default 1e-3) so that +/- h probes cannot straddle a kink.
Callers reseed on rejection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .context import (ContextParams, GridFeatures, _coord_differences,
                      context_forward, context_grads)
from .disease import (DiseaseParams, RelationGraph, count_cooccurrence,
                      build_edges, disease_forward, disease_grads)
from .exceptions import FixtureRejectedError, GradientProbeError
from .geometry import Box

__all__ = [
    "KINK_FLOOR",
    "ParamCheck",
    "GradReport",
    "ContextFixture",
    "DiseaseFixture",
    "central_diff",
    "relative_errors",
    "check",
    "make_context_fixture",
    "make_disease_fixture",
    "accepted_fixture",
]

# A fixture whose raw spatial prior is this close to the ReLU kink is
# refused even if a generator produced it with a smaller margin.
KINK_FLOOR = 1e-7


def central_diff(f, x, h: float = 1e-5) -> np.ndarray:
    """Symmetric-difference gradient of scalar ``f`` at ``x``, per coordinate.

    Raises :class:`chestrel.exceptions.GradientProbeError` naming the
    coordinate if any probe returns a non-finite value or throws.
    """
    x = np.array(x, dtype=np.float64)
    if h <= 0:
        raise ValueError(f"step must be positive, got {h}")
    grad = np.empty_like(x)
    for idx in np.ndindex(x.shape):
        probes = []
        for sign in (+1.0, -1.0):
            shifted = x.copy()
            shifted[idx] += sign * h
            try:
                value = float(f(shifted))
            except GradientProbeError:
                raise
            except Exception as exc:
                raise GradientProbeError(idx, float("nan")) from exc
            if not np.isfinite(value):
                raise GradientProbeError(idx, value)
            probes.append(value)
        grad[idx] = (probes[0] - probes[1]) / (2.0 * h)
    return grad


def relative_errors(analytic, numeric) -> np.ndarray:
    """Elementwise |a - n| / max(1e-8, |a|, |n|)."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(1e-8, np.maximum(np.abs(analytic), np.abs(numeric)))
    return np.abs(analytic - numeric) / denom


@dataclass(frozen=True)
class ParamCheck:
    name: str
    max_rel: float
    max_abs: float
    worst_coordinate: tuple[int, ...]
    analytic_at_worst: float
    numeric_at_worst: float

    def passed(self, tol: float) -> bool:
        return self.max_rel <= tol


@dataclass(frozen=True)
class GradReport:
    checks: tuple[ParamCheck, ...]
    step: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(c.passed(self.tolerance) for c in self.checks)

    @property
    def max_rel(self) -> float:
        return max(c.max_rel for c in self.checks)

    def format_table(self) -> str:
        lines = [
            f"{'parameter':<15} {'max rel':>12} {'max abs':>12} "
            f"{'worst coordinate':>18} {'status':>8}"
        ]
        for c in self.checks:
            status = "pass" if c.passed(self.tolerance) else "FAIL"
            lines.append(
                f"{c.name:<15} {c.max_rel:>12.3e} {c.max_abs:>12.3e} "
                f"{str(c.worst_coordinate):>18} {status:>8}"
            )
        verdict = "pass" if self.passed else "FAIL"
        lines.append(f"overall: {verdict} (h={self.step:g}, tol={self.tolerance:g})")
        return "\n".join(lines)


@dataclass(frozen=True)
class ContextFixture:
    """Inputs, weights, and cotangent for one attention gradient check."""

    boxes: np.ndarray
    f_a: np.ndarray
    grids: GridFeatures
    params: ContextParams
    cotangent: np.ndarray
    seed: int

    def kink_margin(self) -> float:
        """Distance of the closest raw spatial prior to the ReLU kink."""
        diffs = _coord_differences(self.boxes, self.grids.centers(),
                                   self.grids.lung_union())
        return float(np.min(np.abs(diffs @ self.params.W_s.reshape(-1))))

    def parameters(self) -> dict[str, np.ndarray]:
        return {
            "W_a": self.params.W_a, "W_g": self.params.W_g,
            "W_s": self.params.W_s, "W_k": self.params.W_k,
            "f_a": self.f_a, "grid_left": self.grids.left,
            "grid_right": self.grids.right,
        }

    def objective(self, overrides: dict[str, np.ndarray]) -> float:
        def pick(name, default):
            return overrides.get(name, default)

        params = ContextParams(
            W_a=pick("W_a", self.params.W_a), W_g=pick("W_g", self.params.W_g),
            W_s=pick("W_s", self.params.W_s), W_k=pick("W_k", self.params.W_k),
        )
        grids = GridFeatures(
            left=pick("grid_left", self.grids.left),
            right=pick("grid_right", self.grids.right),
            left_lung=self.grids.left_lung, right_lung=self.grids.right_lung,
        )
        out = context_forward(self.boxes, pick("f_a", self.f_a), grids, params)
        return float(np.sum(self.cotangent * out.f_cxt))

    def analytic_grads(self) -> dict[str, np.ndarray]:
        return context_grads(self.boxes, self.f_a, self.grids, self.params,
                             self.cotangent).as_dict()


@dataclass(frozen=True)
class DiseaseFixture:
    """Inputs, weights, and cotangent for one graph-module gradient check."""

    class_probs: np.ndarray
    global_feature: np.ndarray
    graph: RelationGraph
    params: DiseaseParams
    cotangent: np.ndarray
    seed: int

    def kink_margin(self) -> float:
        """The graph module is smooth; there is no kink to avoid."""
        return float("inf")

    def parameters(self) -> dict[str, np.ndarray]:
        return {
            "W_emb": self.params.W_emb, "W_t": self.params.W_t,
            "W_cls": self.params.W_cls, "class_probs": self.class_probs,
            "global_feature": self.global_feature,
        }

    def objective(self, overrides: dict[str, np.ndarray]) -> float:
        def pick(name, default):
            return overrides.get(name, default)

        params = DiseaseParams(
            W_emb=pick("W_emb", self.params.W_emb),
            W_t=pick("W_t", self.params.W_t),
            W_cls=pick("W_cls", self.params.W_cls),
        )
        out = disease_forward(pick("class_probs", self.class_probs),
                              pick("global_feature", self.global_feature),
                              self.graph, params)
        return float(np.sum(self.cotangent * out.f_cate))

    def analytic_grads(self) -> dict[str, np.ndarray]:
        return disease_grads(self.class_probs, self.global_feature, self.graph,
                             self.params, self.cotangent).as_dict()


def check(module_grads: dict[str, np.ndarray], fixture, tol: float = 1e-5,
          h: float = 1e-5) -> GradReport:
    """Probe every parameter of ``fixture`` and compare against ``module_grads``.

    Raises :class:`chestrel.exceptions.FixtureRejectedError` if the fixture
    sits within ``KINK_FLOOR`` of a ReLU kink; reseed and retry instead of
    loosening the tolerance.
    """
    margin = fixture.kink_margin()
    if margin < KINK_FLOOR:
        raise FixtureRejectedError(
            f"a raw spatial prior is {margin:.3e} from the ReLU kink "
            f"(floor {KINK_FLOOR:g}); reseed the fixture"
        )
    checks = []
    for name, value in fixture.parameters().items():
        if name not in module_grads:
            raise KeyError(f"analytic gradients are missing {name!r}")
        numeric = central_diff(lambda v, _n=name: fixture.objective({_n: v}),
                               value, h)
        analytic = np.asarray(module_grads[name], dtype=np.float64)
        rel = relative_errors(analytic, numeric)
        worst = np.unravel_index(int(np.argmax(rel)), rel.shape)
        checks.append(ParamCheck(
            name=name,
            max_rel=float(rel[worst]),
            max_abs=float(np.max(np.abs(analytic - numeric))),
            worst_coordinate=tuple(int(i) for i in worst),
            analytic_at_worst=float(analytic[worst]),
            numeric_at_worst=float(numeric[worst]),
        ))
    return GradReport(checks=tuple(checks), step=h, tolerance=tol)


def make_context_fixture(seed: int, n_r: int = 3, n_d: int = 2, d_m: int = 5,
                         d_a: int = 6, d_k: int = 7, d_cxt: int = 4,
                         margin: float = 1e-3) -> ContextFixture:
    """Small random attention fixture, rejected if any prior is near a kink.

    ``margin`` is deliberately far above ``KINK_FLOOR``: a probe moves a raw
    prior by at most about the step size times a coordinate difference, so a
    1e-3 margin keeps every +/- 1e-5 probe on one side of the kink.
    """
    rng = np.random.default_rng(seed)
    left = Box(10.0 + rng.uniform(0, 2), 20.0 + rng.uniform(0, 2),
               45.0 + rng.uniform(0, 2), 90.0 + rng.uniform(0, 2))
    right = Box(55.0 + rng.uniform(0, 2), 18.0 + rng.uniform(0, 2),
                95.0 + rng.uniform(0, 2), 88.0 + rng.uniform(0, 2))
    grids = GridFeatures(
        left=rng.normal(scale=0.5, size=(n_d * n_d, d_m)),
        right=rng.normal(scale=0.5, size=(n_d * n_d, d_m)),
        left_lung=left, right_lung=right,
    )
    union = grids.lung_union()
    boxes = np.empty((n_r, 4))
    for i in range(n_r):
        x1 = rng.uniform(union.box.x1, union.box.x2 - 5.0)
        y1 = rng.uniform(union.box.y1, union.box.y2 - 5.0)
        boxes[i] = (x1, y1, x1 + rng.uniform(3.0, union.box.x2 - x1),
                    y1 + rng.uniform(3.0, union.box.y2 - y1))
    f_a = rng.normal(scale=0.5, size=(n_r, d_a))
    params = ContextParams(
        W_a=rng.normal(scale=0.5, size=(d_a, d_k)),
        W_g=rng.normal(scale=0.5, size=(d_m, d_k)),
        W_s=rng.normal(scale=1.0, size=(1, 4)),
        W_k=rng.normal(scale=0.5, size=(d_m, d_cxt)),
    )
    cotangent = rng.normal(size=(n_r, d_cxt))
    fixture = ContextFixture(boxes=boxes, f_a=f_a, grids=grids, params=params,
                             cotangent=cotangent, seed=seed)
    if fixture.kink_margin() < margin:
        raise FixtureRejectedError(
            f"seed {seed}: a raw spatial prior is {fixture.kink_margin():.3e} "
            f"from the ReLU kink (margin {margin:g})"
        )
    diffs = _coord_differences(boxes, grids.centers(), union)
    raw = diffs @ params.W_s.reshape(-1)
    if not np.all(np.any(raw > 0, axis=1)):
        raise FixtureRejectedError(
            f"seed {seed}: a proposal has no positive spatial prior"
        )
    return fixture


def make_disease_fixture(seed: int, n_r: int = 4, n_categories: int = 13,
                         d_emb: int = 6, d_out: int = 5,
                         d_global: int = 7) -> DiseaseFixture:
    """Small random graph-module fixture; the objective is smooth."""
    rng = np.random.default_rng(seed)
    presence = rng.uniform(size=(30, n_categories)) < 0.5
    sets = [frozenset(np.flatnonzero(row).tolist()) for row in presence]
    counts = count_cooccurrence(sets, n_categories=n_categories)
    graph = RelationGraph(
        categories=tuple(f"category_{k}" for k in range(n_categories)),
        counts=counts, edges=build_edges(counts),
    )
    logits = rng.normal(size=(n_r, n_categories))
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    fixture = DiseaseFixture(
        class_probs=e / e.sum(axis=1, keepdims=True),
        global_feature=rng.normal(scale=0.5, size=d_global),
        graph=graph,
        params=DiseaseParams(
            W_emb=rng.normal(scale=0.5, size=(n_categories, d_emb)),
            W_t=rng.normal(scale=0.5, size=(d_emb, d_out)),
            W_cls=rng.normal(scale=0.5, size=(d_global, n_categories)),
        ),
        cotangent=rng.normal(size=(n_r, d_out)),
        seed=seed,
    )
    return fixture


def accepted_fixture(factory, seed: int, max_tries: int = 64):
    """Call ``factory(seed)``, advancing the seed past rejected fixtures."""
    for attempt in range(max_tries):
        try:
            return factory(seed + attempt)
        except FixtureRejectedError:
            continue
    raise FixtureRejectedError(
        f"no acceptable fixture in {max_tries} seeds starting at {seed}"
    )
