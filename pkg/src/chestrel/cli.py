"""Command-line interface exposing every pipeline stage.

One executable with nine subcommands: ``stats``, ``graph``,
``encode-spatial``, ``attend``, ``disease``, ``fuse``, ``eval``,
``gradcheck``, and ``synth``.  Every command is deterministic given its
inputs and seeds, writes outputs atomically, and reports failures on
stderr as ``chestrel: error [category] message`` with a nonzero exit code.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import context, datasets, disease, fusion, geometry, gradcheck, metrics
from .exceptions import (AnnotationError, DegenerateDistributionError,
                         FixtureRejectedError, GradientProbeError, ShapeError)
from .tensor import (load_named_tensors, load_tensor, save_named_tensors,
                     save_tensor)

__all__ = ["main", "build_parser"]


def _parse_floats(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(part) for part in text.split(",") if part != "")
    except ValueError as exc:
        raise ValueError(f"expected comma-separated numbers, got {text!r}") from exc
    if not values:
        raise ValueError(f"expected at least one number, got {text!r}")
    return values


def _parse_size(text: str) -> tuple[int, int]:
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise ValueError(f"expected WIDTHxHEIGHT, got {text!r}")
    return int(parts[0]), int(parts[1])


# ---------------------------------------------------------------------------
# Command handlers
# ---------------------------------------------------------------------------

def cmd_stats(args) -> int:
    ann = datasets.load_annotations(args.ann, canonical=not args.no_canonical)
    table = datasets.stats(ann)
    print(table.format_table(with_parents=args.parents))
    if args.out:
        from ._io import dump_json
        dump_json(args.out, {
            "categories": list(table.categories),
            "parents": list(table.parents),
            "instance_counts": table.instance_counts.tolist(),
            "image_counts": table.image_counts.tolist(),
            "cooccurrence": table.cooccurrence.tolist(),
            "n_images": table.n_images,
        })
    return 0


def cmd_graph(args) -> int:
    ann = datasets.load_annotations(args.ann, canonical=not args.no_canonical)
    graph = disease.RelationGraph.from_annotations(ann)
    graph.save(args.out)
    print(f"relation graph over {graph.n_categories} categories "
          f"-> {args.out}")
    print(f"{'category':<20} {'images':>7}  strongest outgoing edge")
    for i, name in enumerate(graph.categories):
        row = graph.edges[i].copy()
        row[i] = -1.0  # ignore the self-edge when ranking partners
        j = int(np.argmax(row))
        if graph.counts[i, i] == 0:
            partner = "(never occurs)"
        elif row[j] <= 0:
            partner = "(no co-occurrence)"
        else:
            partner = f"-> {graph.categories[j]} ({row[j]:.4f})"
        print(f"{name:<20} {int(graph.counts[i, i]):>7}  {partner}")
    return 0


def cmd_encode_spatial(args) -> int:
    boxes = load_tensor(args.boxes)
    parts = geometry.load_parts_record(args.parts)
    encoding = geometry.encode_spatial(boxes, parts, d_e=args.d_e)
    save_tensor(args.out, encoding.f_spa)
    if args.m_out:
        save_tensor(args.m_out, encoding.m)
    print(f"encoded {encoding.f_spa.shape[0]} proposals -> "
          f"width {encoding.f_spa.shape[1]} ({args.out})")
    return 0


def cmd_attend(args) -> int:
    boxes = load_tensor(args.boxes)
    parts = geometry.load_parts_record(args.parts)
    feats = load_named_tensors(args.features,
                               ("f_a", "grid_left", "grid_right"))
    grids = context.GridFeatures(
        left=feats["grid_left"], right=feats["grid_right"],
        left_lung=parts.left_lung, right_lung=parts.right_lung,
    )
    if args.params:
        params = context.ContextParams.load(args.params)
    else:
        params = context.ContextParams.random(
            seed=args.seed, d_a=feats["f_a"].shape[1], d_m=grids.d_m,
            d_k=args.d_k, d_cxt=args.d_cxt, stddev=args.init_stddev,
        )
    out = context.context_forward(boxes, feats["f_a"], grids, params)
    save_tensor(args.out, out.f_cxt)
    if args.attn_out:
        save_tensor(args.attn_out, out.attn)
    print(f"attended {out.f_cxt.shape[0]} proposals over {grids.n_cells} "
          f"grid cells -> width {out.f_cxt.shape[1]} ({args.out})")
    return 0


def cmd_disease(args) -> int:
    if args.graph:
        graph = disease.RelationGraph.load(args.graph)
    else:
        ann = datasets.load_annotations(args.ann,
                                        canonical=not args.no_canonical)
        graph = disease.RelationGraph.from_annotations(ann)
    if args.features:
        feats = load_named_tensors(args.features,
                                   ("class_probs", "global_feature"))
        probs, pooled = feats["class_probs"], feats["global_feature"]
    elif args.probs and args.global_feature:
        probs = load_tensor(args.probs)
        pooled = load_tensor(args.global_feature)
    else:
        raise ValueError("pass --features, or both --probs and --global")
    if pooled.ndim == 3:
        pooled = disease.global_pool(pooled)
    if args.params:
        params = disease.DiseaseParams.load(args.params)
    else:
        params = disease.DiseaseParams.random(
            seed=args.seed, n_categories=graph.n_categories,
            d_emb=args.d_emb, d_out=args.d_out, d_global=pooled.shape[0],
            stddev=args.init_stddev,
        )
    out = disease.disease_forward(probs, pooled, graph, params)
    save_tensor(args.out, out.f_cate)
    if args.scores_out:
        from ._io import dump_json
        dump_json(args.scores_out, {
            "categories": list(graph.categories),
            "logits": out.logits.tolist(),
            "beta": out.beta.tolist(),
        })
    print(f"category features for {out.f_cate.shape[0]} regions -> "
          f"width {out.f_cate.shape[1]} ({args.out})")
    print(f"{'category':<20} {'score':>8}")
    for name, score in zip(graph.categories, out.beta):
        print(f"{name:<20} {score:>8.4f}")
    return 0


def cmd_fuse(args) -> int:
    if args.report_params:
        ctx = context.ContextParams.random(seed=0)
        dis = disease.DiseaseParams.random(seed=0)
        print(fusion.param_count(ctx, dis).format_table())
        if not any((args.appearance, args.spatial, args.contextual,
                    args.category)):
            return 0
    blocks = {
        name: load_tensor(path) if path else None
        for name, path in (
            ("f", args.appearance), ("f_spa", args.spatial),
            ("f_cxt", args.contextual), ("f_cate", args.category),
        )
    }
    if all(v is None for v in blocks.values()):
        raise ValueError("no feature blocks given; pass at least one tensor file")
    fused = fusion.fuse(**blocks)
    if not args.out:
        raise ValueError("--out is required when fusing tensors")
    save_tensor(args.out, fused.f_prime)
    layout_path = args.layout_out or args.out + ".layout.json"
    from ._io import dump_json
    dump_json(layout_path, fused.layout.to_json_dict())
    print(f"fused {fused.n_rows} rows -> width {fused.layout.total} "
          f"({args.out}; layout {layout_path})")
    return 0


def cmd_eval(args) -> int:
    config = metrics.EvalConfig(
        iou_thresholds=_parse_floats(args.iou),
        recall_fp=_parse_floats(args.recall_fp),
        kind=args.kind,
        recall_iou=args.recall_iou,
    )
    report = metrics.evaluate_files(args.gt, args.det, config,
                                    canonical=not args.no_canonical)
    print(report.format_text())
    if args.out:
        report.save(args.out)
    if args.csv:
        report.to_csv(args.csv)
    return 0


def cmd_gradcheck(args) -> int:
    if args.module == "context":
        factory = gradcheck.make_context_fixture
    else:
        factory = gradcheck.make_disease_fixture
    fixture = gradcheck.accepted_fixture(factory, args.seed,
                                         max_tries=args.max_tries)
    if fixture.seed != args.seed:
        print(f"seed {args.seed} rejected (ReLU kink); using seed {fixture.seed}")
    report = gradcheck.check(fixture.analytic_grads(), fixture,
                             tol=args.tol, h=args.h)
    print(f"gradient check: module={args.module} seed={fixture.seed}")
    print(report.format_table())
    return 0 if report.passed else 1


def cmd_synth(args) -> int:
    corpus = datasets.synth_corpus(
        seed=args.seed, n_images=args.n_images,
        category_priors=(None if args.priors is None
                         else _parse_floats(args.priors)),
        cooccurrence_strength=args.cooccurrence_strength,
        image_size=_parse_size(args.image_size),
    )
    ann = corpus.annotations
    os.makedirs(args.out_dir, exist_ok=True)
    ann_path = os.path.join(args.out_dir, "annotations.json")
    datasets.save_annotations(ann_path, ann)
    parts_dir = os.path.join(args.out_dir, "parts")
    os.makedirs(parts_dir, exist_ok=True)
    for image_id, parts in sorted(corpus.parts.items()):
        geometry.save_parts_record(
            os.path.join(parts_dir, f"parts_{image_id:05d}.json"), parts)
    print(f"wrote {len(ann.images)} images, {len(ann.instances)} instances "
          f"-> {ann_path}")
    print(f"parts records -> {parts_dir}")
    if args.detections:
        det_path = os.path.join(args.out_dir, "detections.json")
        dets = datasets.synth_detections(ann, seed=args.det_seed
                                         if args.det_seed is not None
                                         else args.seed + 1)
        datasets.save_detections(det_path, dets)
        print(f"wrote {len(dets)} detections -> {det_path}")
    if args.features > 0:
        feat_dir = os.path.join(args.out_dir, "features")
        os.makedirs(feat_dir, exist_ok=True)
        by_image: dict[int, list] = {}
        for inst in ann.instances:
            by_image.setdefault(inst.image_id, []).append(inst.box)
        count = 0
        for im in ann.sorted_images():
            if count >= args.features:
                break
            parts = corpus.parts[im.id]
            boxes = by_image.get(im.id)
            if not boxes:
                # Image without findings: probe the two lung fields.
                boxes = [parts.left_lung, parts.right_lung]
            arr = np.stack([b.as_array() for b in boxes])
            feats = datasets.synth_image_features(
                seed=args.seed + im.id, n_r=arr.shape[0], n_d=args.n_d,
                d_m=args.d_m, d_a=args.d_a,
                n_categories=len(ann.categories),
            )
            save_tensor(os.path.join(feat_dir, f"boxes_{im.id:05d}.json"), arr)
            save_tensor(os.path.join(feat_dir, f"appearance_{im.id:05d}.json"),
                        feats["f_a"])
            save_named_tensors(
                os.path.join(feat_dir, f"features_{im.id:05d}.json"), feats)
            count += 1
        print(f"feature tensors for {count} images -> {feat_dir}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chestrel",
        description=("Relation features for chest radiograph detections: "
                     "spatial encoding, lung-field attention, disease "
                     "co-occurrence graphs, and COCO-style evaluation."),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="per-category dataset statistics")
    p.add_argument("--ann", required=True, help="annotation file")
    p.add_argument("--parents", action="store_true",
                   help="add parent-class totals")
    p.add_argument("--no-canonical", action="store_true",
                   help="allow non-canonical category tables")
    p.add_argument("--out", help="also write the statistics as JSON")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("graph", help="build the co-occurrence relation graph")
    p.add_argument("--ann", required=True, help="annotation file")
    p.add_argument("--out", required=True, help="graph file to write")
    p.add_argument("--no-canonical", action="store_true")
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("encode-spatial",
                       help="spatial relation embedding of proposal boxes")
    p.add_argument("--boxes", required=True, help="(n, 4) tensor file")
    p.add_argument("--parts", required=True, help="five-part anatomy file")
    p.add_argument("--d-e", type=int, default=8, dest="d_e",
                   help="sinusoid pairs per scalar (default 8)")
    p.add_argument("--out", required=True, help="f_spa tensor file to write")
    p.add_argument("--m-out", help="also write the raw 40-wide relation rows")
    p.set_defaults(func=cmd_encode_spatial)

    p = sub.add_parser("attend", help="contextual attention over lung grids")
    p.add_argument("--boxes", required=True, help="(n, 4) tensor file")
    p.add_argument("--parts", required=True, help="five-part anatomy file")
    p.add_argument("--features", required=True,
                   help="named tensor file with f_a, grid_left, grid_right")
    p.add_argument("--params", help="weight file (W_a, W_g, W_s, W_k)")
    p.add_argument("--seed", type=int, default=0,
                   help="weight seed when --params is absent")
    p.add_argument("--d-k", type=int, default=1024, dest="d_k")
    p.add_argument("--d-cxt", type=int, default=1024, dest="d_cxt")
    p.add_argument("--init-stddev", type=float, default=0.01)
    p.add_argument("--out", required=True, help="f_cxt tensor file to write")
    p.add_argument("--attn-out", help="also write the attention rows")
    p.set_defaults(func=cmd_attend)

    p = sub.add_parser("disease", help="graph-conditioned category features")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--graph", help="relation graph file")
    src.add_argument("--ann", help="annotation file to estimate the graph from")
    p.add_argument("--features",
                   help="named tensor file with class_probs and global_feature")
    p.add_argument("--probs", help="(n, C) class-probability tensor file")
    p.add_argument("--global", dest="global_feature",
                   help="pooled global feature tensor file (1-d or h x w x d)")
    p.add_argument("--params", help="weight file (W_emb, W_t, W_cls)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--d-emb", type=int, default=1024, dest="d_emb")
    p.add_argument("--d-out", type=int, default=256, dest="d_out")
    p.add_argument("--init-stddev", type=float, default=0.01)
    p.add_argument("--no-canonical", action="store_true")
    p.add_argument("--out", required=True, help="f_cate tensor file to write")
    p.add_argument("--scores-out", help="also write per-category scores")
    p.set_defaults(func=cmd_disease)

    p = sub.add_parser("fuse", help="concatenate feature blocks")
    p.add_argument("--appearance", help="base feature tensor file")
    p.add_argument("--spatial", help="f_spa tensor file")
    p.add_argument("--contextual", help="f_cxt tensor file")
    p.add_argument("--category", help="f_cate tensor file")
    p.add_argument("--out", help="fused tensor file to write")
    p.add_argument("--layout-out",
                   help="layout sidecar path (default: OUT.layout.json)")
    p.add_argument("--report-params", action="store_true",
                   help="print the per-module parameter count table")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("eval", help="detection/segmentation evaluation")
    p.add_argument("--gt", required=True, help="ground-truth annotation file")
    p.add_argument("--det", required=True, help="detection file")
    p.add_argument("--iou", default="0.25,0.5,0.75",
                   help="comma-separated AP IoU thresholds")
    p.add_argument("--recall-fp", default="0.1", dest="recall_fp",
                   help="comma-separated FP-per-image budgets")
    p.add_argument("--kind", choices=("box", "mask"), default="box")
    p.add_argument("--recall-iou", type=float, default=0.25, dest="recall_iou")
    p.add_argument("--no-canonical", action="store_true")
    p.add_argument("--out", help="write the report as JSON")
    p.add_argument("--csv", help="write per-category rows as CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck",
                       help="certify analytic gradients against finite differences")
    p.add_argument("--module", choices=("context", "disease"), required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--max-tries", type=int, default=64, dest="max_tries")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("synth", help="generate a reproducible synthetic corpus")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n-images", type=int, required=True, dest="n_images")
    p.add_argument("--out-dir", required=True, dest="out_dir")
    p.add_argument("--priors",
                   help="presence probability, scalar or 13 comma-separated")
    p.add_argument("--cooccurrence-strength", type=float, default=0.0,
                   dest="cooccurrence_strength")
    p.add_argument("--image-size", default="1024x1024", dest="image_size")
    p.add_argument("--detections", action="store_true",
                   help="also write perturbed detections")
    p.add_argument("--det-seed", type=int, dest="det_seed")
    p.add_argument("--features", type=int, default=0,
                   help="write feature tensors for the first N images")
    p.add_argument("--n-d", type=int, default=7, dest="n_d")
    p.add_argument("--d-m", type=int, default=256, dest="d_m")
    p.add_argument("--d-a", type=int, default=1024, dest="d_a")
    p.set_defaults(func=cmd_synth)

    return parser


_CATEGORIES = (
    (AnnotationError, "annotation"),
    (ShapeError, "shape"),
    (DegenerateDistributionError, "degenerate"),
    (FixtureRejectedError, "fixture"),
    (GradientProbeError, "gradient"),
    (json.JSONDecodeError, "parse"),
    (FileNotFoundError, "io"),
    (IsADirectoryError, "io"),
    (PermissionError, "io"),
    (OSError, "io"),
    (ValueError, "validation"),
    (TypeError, "validation"),
    (KeyError, "validation"),
)


def _category_of(exc: BaseException) -> str:
    for kind, name in _CATEGORIES:
        if isinstance(exc, kind):
            return name
    return "internal"


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # surfaced uniformly; category is machine-readable
        print(f"chestrel: error [{_category_of(exc)}] {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
