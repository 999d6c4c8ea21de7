"""Feature fusion and parameter accounting tests."""

from __future__ import annotations

import numpy as np
import pytest

from chestrel.context import ContextParams
from chestrel.disease import DiseaseParams
from chestrel.exceptions import ShapeError
from chestrel.fusion import (
    BLOCK_ORDER,
    FeatureLayout,
    FusedFeatures,
    fuse,
    param_count,
    split,
)


class TestFeatureLayout:
    def test_default_total_is_2944(self):
        layout = FeatureLayout()
        assert layout.total == 1024 + 640 + 1024 + 256 == 2944
        assert layout.offsets() == (0, 1024, 1664, 2688)

    def test_negative_width_rejected(self):
        with pytest.raises(ValueError, match="spatial"):
            FeatureLayout(spatial=-1)

    def test_json_round_trip(self):
        layout = FeatureLayout(appearance=3, spatial=0, contextual=5, category=2)
        doc = layout.to_json_dict()
        assert doc["total"] == 10
        assert FeatureLayout.from_json_dict(doc) == layout

    def test_json_missing_widths_rejected(self):
        with pytest.raises(ShapeError, match="widths"):
            FeatureLayout.from_json_dict({"order": list(BLOCK_ORDER)})


class TestFuse:
    def test_default_dims_make_width_2944(self, rng):
        fused = fuse(f=rng.normal(size=(2, 1024)),
                     f_spa=rng.normal(size=(2, 640)),
                     f_cxt=rng.normal(size=(2, 1024)),
                     f_cate=rng.normal(size=(2, 256)))
        assert fused.f_prime.shape == (2, 2944)

    def test_zero_width_segment_passes_rest_through(self, rng):
        f = rng.normal(size=(3, 4))
        f_cate = rng.normal(size=(3, 2))
        fused = fuse(f=f, f_cate=f_cate)
        assert fused.layout.widths() == (4, 0, 0, 2)
        assert np.array_equal(fused.f_prime, np.hstack([f, f_cate]))

    def test_round_trip_is_bitwise(self, rng):
        blocks = {
            "f": rng.normal(size=(4, 5)),
            "f_spa": rng.normal(size=(4, 3)),
            "f_cxt": rng.normal(size=(4, 6)),
            "f_cate": rng.normal(size=(4, 2)),
        }
        fused = fuse(**blocks)
        parts = split(fused)
        assert np.array_equal(parts["appearance"], blocks["f"])
        assert np.array_equal(parts["spatial"], blocks["f_spa"])
        assert np.array_equal(parts["contextual"], blocks["f_cxt"])
        assert np.array_equal(parts["category"], blocks["f_cate"])

    def test_width_additivity(self, rng):
        widths = (7, 1, 9, 4)
        fused = fuse(*(rng.normal(size=(2, w)) for w in widths))
        assert fused.f_prime.shape[1] == sum(widths)
        assert fused.layout.widths() == widths

    def test_row_count_mismatch_names_block(self, rng):
        with pytest.raises(ShapeError,
                           match="contextual block has 3 rows, expected 2"):
            fuse(f=rng.normal(size=(2, 4)), f_cxt=rng.normal(size=(3, 4)))

    def test_all_blocks_missing_rejected(self):
        with pytest.raises(ShapeError, match="no feature blocks"):
            fuse()

    def test_unknown_block_name_rejected(self, rng):
        fused = fuse(f=rng.normal(size=(1, 2)))
        with pytest.raises(KeyError, match="unknown block"):
            fused.block("anything")

    def test_layout_width_mismatch_rejected(self, rng):
        with pytest.raises(ShapeError, match="layout"):
            FusedFeatures(f_prime=rng.normal(size=(1, 5)),
                          layout=FeatureLayout(appearance=3, spatial=0,
                                               contextual=0, category=0))


class TestParamCount:
    def test_context_defaults(self):
        report = param_count(context_params=ContextParams.random(seed=0))
        assert report.modules["contextual"] == 1_572_868
        assert report.modules["spatial"] == 0
        assert report.modules["category"] == 0
        assert report.total == 1_572_868

    def test_disease_defaults(self):
        report = param_count(disease_params=DiseaseParams.random(seed=0))
        assert report.modules["category"] == 278_784
        assert report.total == 278_784

    def test_empty(self):
        report = param_count()
        assert report.modules == {"spatial": 0, "contextual": 0, "category": 0}
        assert report.total == 0

    def test_table_mentions_reference_caveat(self):
        text = param_count().format_table()
        assert "full detector" in text
        assert "0.09" in text and "3.29" in text and "0.57" in text
