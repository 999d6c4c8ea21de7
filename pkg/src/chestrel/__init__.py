"""Relation features for chest radiograph detection pipelines.

Three standalone numerical kernels enrich per-proposal detector features:

- :mod:`chestrel.geometry` encodes each proposal's position relative to
  five anatomical part boxes with a sinusoidal embedding;
- :mod:`chestrel.context` attends over lung-field grid features with a
  learned spatial prior, with analytic gradients;
- :mod:`chestrel.disease` propagates per-category scores through a
  co-occurrence graph estimated from annotations, with analytic gradients.

Around them: :mod:`chestrel.fusion` concatenates the feature blocks,
:mod:`chestrel.gradcheck` certifies gradients against finite differences,
:mod:`chestrel.metrics` evaluates detections (AP, recall at an FP budget,
mask IoU), and :mod:`chestrel.datasets` parses annotations and generates
seeded synthetic corpora.  The ``chestrel`` command line exposes every
stage.
"""

from .context import (ContextGrads, ContextOutput, ContextParams,
                      ContextualRelationModule, GridFeatures,
                      attention_weights, context_forward, context_grads)
from .datasets import (CANONICAL_CATEGORIES, PARENT_CLASSES, AnnotationSet,
                       DatasetStats, Instance, load_annotations,
                       save_annotations, stats, synth_corpus)
from .disease import (DiseaseGrads, DiseaseOutput, DiseaseParams,
                      DiseaseRelationModule, RelationGraph, bce_loss,
                      build_edges, count_cooccurrence, disease_forward,
                      disease_grads)
from .exceptions import (AnnotationError, DegenerateAttentionError,
                         DegenerateDistributionError, FixtureRejectedError,
                         GradientProbeError, ShapeError)
from .fusion import FeatureLayout, FusedFeatures, fuse, param_count, split
from .geometry import (PART_ORDER, AnatomicalParts, Box, SpatialEncoding,
                       SpatialRelationEncoder, encode_spatial, lung_union,
                       part_relation, sinusoidal_embed, spatial_vector)
from .gradcheck import GradReport, central_diff, check, make_context_fixture, \
    make_disease_fixture
from .metrics import (EvalConfig, EvalReport, average_precision, evaluate,
                      iou_box, iou_mask, match_detections, recall_at_fp)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # geometry
    "Box", "AnatomicalParts", "SpatialEncoding", "PART_ORDER",
    "lung_union", "part_relation", "spatial_vector", "sinusoidal_embed",
    "encode_spatial", "SpatialRelationEncoder",
    # context
    "GridFeatures", "ContextParams", "ContextOutput", "ContextGrads",
    "attention_weights", "context_forward", "context_grads",
    "ContextualRelationModule",
    # disease
    "RelationGraph", "DiseaseParams", "DiseaseOutput", "DiseaseGrads",
    "count_cooccurrence", "build_edges", "bce_loss", "disease_forward",
    "disease_grads", "DiseaseRelationModule",
    # fusion
    "FeatureLayout", "FusedFeatures", "fuse", "split", "param_count",
    # gradcheck
    "GradReport", "central_diff", "check", "make_context_fixture",
    "make_disease_fixture",
    # metrics
    "EvalConfig", "EvalReport", "iou_box", "iou_mask", "match_detections",
    "average_precision", "recall_at_fp", "evaluate",
    # datasets
    "AnnotationSet", "Instance", "DatasetStats", "CANONICAL_CATEGORIES",
    "PARENT_CLASSES", "load_annotations", "save_annotations", "stats",
    "synth_corpus",
    # exceptions
    "ShapeError", "AnnotationError", "DegenerateDistributionError",
    "DegenerateAttentionError", "FixtureRejectedError", "GradientProbeError",
]
