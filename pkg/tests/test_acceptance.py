"""Acceptance gate: nine numbered criteria with explicit runtime budgets.

Each test prints one ``[PASS]``/``[FAIL]`` line on the real stdout so the
gate is readable even under captured output, and asserts both the numeric
contract and the wall-clock budget.
"""

from __future__ import annotations

import json
import os
import subprocess
import sys
import time
from contextlib import contextmanager
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from chestrel import context, datasets, disease, fusion, geometry, gradcheck, \
    metrics
from chestrel.datasets import CANONICAL_CATEGORIES
from chestrel.exceptions import FixtureRejectedError
from chestrel.geometry import PART_ORDER, AnatomicalParts, Box

import oracles


@pytest.fixture()
def gate(capfd):
    """Context manager printing one [PASS]/[FAIL] line past pytest capture."""
    @contextmanager
    def criterion(name, budget_s):
        start = time.perf_counter()
        status = "FAIL"
        try:
            yield
            elapsed = time.perf_counter() - start
            assert elapsed < budget_s, \
                f"{name} took {elapsed:.2f}s, budget {budget_s}s"
            status = "PASS"
        except pytest.skip.Exception:
            status = "SKIP"
            raise
        finally:
            elapsed = time.perf_counter() - start
            with capfd.disabled():
                print(f"[{status}] {name} ({elapsed:.2f}s)", flush=True)
    return criterion


def random_box(rng, lo, hi, min_size):
    x1 = rng.uniform(lo, hi - min_size)
    y1 = rng.uniform(lo, hi - min_size)
    return Box(x1, y1, x1 + rng.uniform(min_size, hi - x1),
               y1 + rng.uniform(min_size, hi - y1))


def random_parts(rng):
    """Plausible anatomy with lungs large enough to keep ratios well scaled."""
    lx, ly = rng.uniform(30, 150), rng.uniform(100, 250)
    left = Box(lx, ly, lx + rng.uniform(150, 350), ly + rng.uniform(300, 600))
    rx, ry = rng.uniform(550, 650), rng.uniform(100, 250)
    right = Box(rx, ry, rx + rng.uniform(150, 350),
                ry + rng.uniform(300, 600))
    others = [random_box(rng, 5.0, 1000.0, 20.0) for _ in range(3)]
    return AnatomicalParts(left, right, *others)


def map_parts(parts, fn):
    return AnatomicalParts(**{name: fn(getattr(parts, name))
                              for name in PART_ORDER})


def box_iou_fn(det, gt):
    return metrics.iou_box(det.box, gt.box)


class TestAcceptance:
    def test_criterion_1_dimension_contracts(self, gate, simple_parts, rng):
        with gate("1. dimension contracts", 1.0):
            boxes = np.array([[15.0, 25.0, 40.0, 80.0],
                              [60.0, 20.0, 90.0, 70.0]])
            enc = geometry.encode_spatial(boxes, simple_parts)
            assert enc.m.shape == (2, 40)
            assert enc.f_spa.shape == (2, 640)

            grids = context.GridFeatures(
                left=rng.normal(size=(49, 256)),
                right=rng.normal(size=(49, 256)),
                left_lung=simple_parts.left_lung,
                right_lung=simple_parts.right_lung)
            ctx_params = context.ContextParams.random(seed=0)
            assert ctx_params.W_a.shape == (1024, 1024)
            assert ctx_params.W_g.shape == (256, 1024)
            assert ctx_params.W_s.shape == (1, 4)
            assert ctx_params.W_k.shape == (256, 1024)
            ctx = context.context_forward(boxes, rng.normal(size=(2, 1024)),
                                          grids, ctx_params)
            assert ctx.f_cxt.shape == (2, 1024)

            corpus = datasets.synth_corpus(seed=0, n_images=20)
            graph = disease.RelationGraph.from_annotations(corpus.annotations)
            dis_params = disease.DiseaseParams.random(seed=0)
            assert dis_params.W_emb.shape == (13, 1024)
            assert dis_params.W_t.shape == (1024, 256)
            assert dis_params.W_cls.shape == (256, 13)
            logits = rng.normal(size=(2, 13))
            probs = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
            dis = disease.disease_forward(probs, rng.normal(size=256), graph,
                                          dis_params)
            assert dis.f_cate.shape == (2, 256)

            fused = fusion.fuse(f=rng.normal(size=(2, 1024)),
                                f_spa=enc.f_spa, f_cxt=ctx.f_cxt,
                                f_cate=dis.f_cate)
            assert fused.f_prime.shape == (2, 2944)
            assert fused.layout.offsets() == (0, 1024, 1664, 2688)

    def test_criterion_2_spatial_invariance(self, gate):
        with gate("2. spatial invariance", 5.0):
            for seed in range(1000):
                rng = np.random.default_rng(seed)
                parts = random_parts(rng)
                boxes = np.stack([random_box(rng, 0.0, 1024.0, 10.0)
                                  .as_array() for _ in range(2)])
                enc = geometry.encode_spatial(boxes, parts)

                tx, ty = rng.uniform(-200, 200, 2)
                shift = np.array([tx, ty, tx, ty])
                moved = geometry.encode_spatial(
                    boxes + shift,
                    map_parts(parts, lambda b: Box(b.x1 + tx, b.y1 + ty,
                                                   b.x2 + tx, b.y2 + ty)))
                assert np.max(np.abs(moved.m - enc.m)) <= 1e-12

                s = rng.uniform(0.5, 2.0)
                scaled = geometry.encode_spatial(
                    boxes * s,
                    map_parts(parts, lambda b: Box(s * b.x1, s * b.y1,
                                                   s * b.x2, s * b.y2)))
                assert np.max(np.abs(scaled.m - enc.m)) <= 1e-12

                assert np.all(np.abs(enc.f_spa) <= 1.0)
                sin, cos = enc.f_spa[:, :320], enc.f_spa[:, 320:]
                assert np.max(np.abs(sin ** 2 + cos ** 2 - 1.0)) <= 1e-12

    def test_criterion_3_attention_normalization(self, gate):
        with gate("3. attention normalization", 5.0):
            shifts = (0.5, -2.0, 3.25, -7.0)
            for seed in range(1000):
                rng = np.random.default_rng(seed)
                # Dyadic logits and a dyadic shift keep every addition exact,
                # so shift invariance can be required bitwise.
                F = rng.integers(-16000, 16001, size=(3, 8)) / 1024.0
                P = rng.integers(0, 2, size=(3, 8)).astype(np.float64)
                P[:, 0] = 1.0
                attn = context.attention_weights(F, P)
                assert np.max(np.abs(attn.sum(axis=1) - 1.0)) <= 1e-12
                assert np.all(attn[P == 0.0] == 0.0)
                shifted = context.attention_weights(
                    F + shifts[seed % 4], P)
                assert np.array_equal(attn, shifted)

    def test_criterion_4_gradient_certification(self, gate):
        with gate("4. gradient certification", 30.0):
            for seed in range(6):
                fx = gradcheck.accepted_fixture(gradcheck.make_context_fixture,
                                                seed)
                assert gradcheck.check(fx.analytic_grads(), fx,
                                       tol=1e-5).passed
                fd = gradcheck.accepted_fixture(gradcheck.make_disease_fixture,
                                                seed)
                assert gradcheck.check(fd.analytic_grads(), fd,
                                       tol=1e-5).passed

            # Criterion bounds: n_r <= 4, n_d <= 3, thirteen categories.
            big = gradcheck.accepted_fixture(
                lambda s: gradcheck.make_context_fixture(s, n_r=4, n_d=3), 11)
            assert gradcheck.check(big.analytic_grads(), big, tol=1e-5).passed
            dis = gradcheck.accepted_fixture(
                lambda s: gradcheck.make_disease_fixture(s, n_r=4,
                                                         n_categories=13), 11)
            assert gradcheck.check(dis.analytic_grads(), dis, tol=1e-5).passed

            # Kinked fixtures are rejected, then reseeded deterministically.
            with pytest.raises(FixtureRejectedError):
                gradcheck.make_context_fixture(3)
            reseeded = gradcheck.accepted_fixture(
                gradcheck.make_context_fixture, 3)
            assert reseeded.seed == 4

            # Fault injection: a corrupted gradient entry must be caught.
            fx = gradcheck.accepted_fixture(gradcheck.make_context_fixture, 0)
            grads = fx.analytic_grads()
            grads["W_a"][0, 0] += 1.0
            assert not gradcheck.check(grads, fx, tol=1e-5).passed
            fd = gradcheck.accepted_fixture(gradcheck.make_disease_fixture, 0)
            grads = fd.analytic_grads()
            grads["W_cls"][0, 1] += 1.0
            assert not gradcheck.check(grads, fd, tol=1e-5).passed

    def test_criterion_5_relation_graph_identities(self, gate):
        with gate("5. relation-graph identities", 5.0):
            for seed in range(5):
                corpus = datasets.synth_corpus(seed=seed, n_images=60,
                                               cooccurrence_strength=0.5)
                ann = corpus.annotations
                counts = disease.count_cooccurrence(ann)
                brute = oracles.cooccurrence_brute(ann.presence_sets(), 13)
                assert np.array_equal(counts, brute)
                assert np.array_equal(counts, corpus.cooccurrence)

                edges = disease.build_edges(counts)
                for i in range(13):
                    if counts[i, i] == 0:
                        assert np.all(edges[i] == 0.0)
                        continue
                    for j in range(13):
                        assert edges[i, j] == float(
                            Fraction(int(counts[i, j]), int(counts[i, i])))

            single = disease.count_cooccurrence(
                [{0}, {0}, set(), {0}], n_categories=1)
            assert single.tolist() == [[3]]
            assert np.array_equal(disease.build_edges(single), np.eye(1))

            priors = [0.0] * 13
            priors[4] = 1.0
            lone = datasets.synth_corpus(seed=2, n_images=10,
                                         category_priors=priors)
            edges = disease.build_edges(
                disease.count_cooccurrence(lone.annotations))
            expected = np.zeros((13, 13))
            expected[4, 4] = 1.0
            assert np.array_equal(edges, expected)

    def test_criterion_6_ap_oracle_equivalence(self, gate):
        with gate("6. AP oracle equivalence", 10.0):
            assert metrics.average_precision([0.9], [True], 1) == 1.0
            assert metrics.average_precision([0.9, 0.8], [False, True],
                                             1) == 0.5
            assert metrics.average_precision([], [], 1) == 0.0

            rng = np.random.default_rng(2026)
            for _ in range(200):
                n = int(rng.integers(0, 7))
                n_gt = int(rng.integers(1, 5))
                scores = np.round(rng.uniform(0.05, 1.0, size=n), 1)
                tp = rng.integers(0, 2, size=n).astype(bool)
                tp &= np.cumsum(tp) <= n_gt
                ap = metrics.average_precision(scores, tp, n_gt)
                brute = oracles.ap_brute(scores.tolist(), tp.tolist(), n_gt)
                assert abs(ap - brute) <= 1e-12

            # The same equivalence via real greedy matching on tiny corpora.
            for trial in range(50):
                trng = np.random.default_rng(3000 + trial)
                gts = [datasets.Instance(1, 1, random_box(trng, 0, 50, 5))
                       for _ in range(int(trng.integers(1, 4)))]
                dets = [datasets.Instance(1, 1, random_box(trng, 0, 50, 5),
                                          score=round(float(trng.uniform()),
                                                      1))
                        for _ in range(int(trng.integers(0, 7)))]
                result = metrics.match_detections(dets, gts, box_iou_fn, 0.25)
                scores = [d.score for d in dets]
                ap = metrics.average_precision(scores, result.tp, len(gts))
                brute = oracles.ap_brute(scores, result.tp.tolist(), len(gts))
                assert abs(ap - brute) <= 1e-12

    def test_criterion_7_recall_at_fp_consistency(self, gate):
        with gate("7. recall@FP consistency", 10.0):
            for seed in (0, 1, 2):
                corpus = datasets.synth_corpus(seed=seed, n_images=8,
                                               category_priors=0.12)
                ann = corpus.annotations
                dets = datasets.synth_detections(ann, seed=seed + 100)
                for cat in range(1, 14):
                    cat_gts = [g for g in ann.instances
                               if g.category_id == cat]
                    cat_dets = [d for d in dets if d.category_id == cat]
                    if len(cat_dets) > 20:
                        continue
                    for cap in (0.0, 0.1, 0.5):
                        got = metrics.recall_at_fp(cat_dets, cat_gts, 8,
                                                   iou_threshold=0.25,
                                                   fp_per_image=cap)
                        brute = oracles.recall_sweep_brute(
                            metrics.match_detections, cat_dets, cat_gts, 8,
                            box_iou_fn, 0.25, cap)
                        assert got == brute

            corpus = datasets.synth_corpus(seed=5, n_images=10,
                                           category_priors=0.2)
            dets = datasets.synth_detections(corpus.annotations, seed=6)
            base = metrics.evaluate(corpus.annotations, dets)
            for transform in (lambda s: 0.25 * s + 0.5, lambda s: s ** 3):
                moved = [replace(d, score=transform(d.score)) for d in dets]
                report = metrics.evaluate(corpus.annotations, moved)
                assert report.to_json_dict() == base.to_json_dict()

    def test_criterion_8_dataset_reproduction(self, gate):
        with gate("8. dataset reproduction", 60.0):
            table1 = {
                "Atelectasis": (289, 51), "Calcification": (281, 67),
                "Consolidation": (2110, 453), "Diffusive Nodule": (195, 51),
                "Emphysema": (232, 66), "Fibrosis": (619, 120),
                "Fracture": (547, 115), "Mass": (133, 34),
                "Nodule": (848, 182), "Effusion": (1734, 379),
                "Pleural Thickening": (526, 105), "Pneumothorax": (169, 42),
                "Cardiomegaly": (223, 70),
            }
            root = os.environ.get("CHESTX_DET_DIR")
            if not root:
                pytest.skip(
                    "set CHESTX_DET_DIR to a directory holding the public "
                    "ChestX-Det annotation files (ChestX_Det_train.json and "
                    "ChestX_Det_test.json, from the Deepwise-AILab "
                    "ChestX-Det-Dataset repository); this sandbox has no "
                    "network access to download them")
            files = {p.name.lower(): p for p in Path(root).rglob("*.json")}

            def find(token):
                hits = [p for name, p in sorted(files.items())
                        if token in name]
                if not hits:
                    pytest.skip(f"no *{token}*.json under CHESTX_DET_DIR; "
                                "expected the release annotation files")
                return str(hits[0])

            for split, column in (("train", 0), ("test", 1)):
                ann, problems = datasets.load_chestx_det(find(split))
                table = datasets.stats(ann)
                got = dict(zip(table.categories,
                               table.instance_counts.tolist()))
                mismatches = [
                    f"  {name}: published {table1[name][column]}, "
                    f"counted {got[name]} "
                    f"(boxes clamped or dropped: {problems.get(name, 0)})"
                    for name in CANONICAL_CATEGORIES
                    if got[name] != table1[name][column]
                ]
                assert not mismatches, (
                    f"{split} split instance counts differ from the "
                    "published statistics; per-category discrepancies:\n"
                    + "\n".join(mismatches))

    def test_criterion_9_cli_determinism(self, gate, tmp_path):
        with gate("9. CLI determinism", 60.0):
            corpus_dir = tmp_path / "corpus"
            ann = str(corpus_dir / "annotations.json")
            det = str(corpus_dir / "detections.json")
            parts = str(corpus_dir / "parts" / "parts_00001.json")
            boxes = str(corpus_dir / "features" / "boxes_00001.json")
            feats = str(corpus_dir / "features" / "features_00001.json")
            graph = str(tmp_path / "graph.json")
            out = {name: str(tmp_path / f"{name}.json")
                   for name in ("stats", "fspa", "fcxt", "fcate", "fused",
                                "report")}

            commands = [
                ("synth", ["synth", "--seed", "1", "--n-images", "2",
                           "--out-dir", str(corpus_dir), "--detections",
                           "--features", "1", "--n-d", "2", "--d-m", "5",
                           "--d-a", "6"],
                 [ann, det, parts, boxes, feats]),
                ("stats", ["stats", "--ann", ann, "--parents",
                           "--out", out["stats"]], [out["stats"]]),
                ("graph", ["graph", "--ann", ann, "--out", graph], [graph]),
                ("encode-spatial", ["encode-spatial", "--boxes", boxes,
                                    "--parts", parts, "--out", out["fspa"]],
                 [out["fspa"]]),
                ("attend", ["attend", "--boxes", boxes, "--parts", parts,
                            "--features", feats, "--seed", "1", "--d-k", "3",
                            "--d-cxt", "4", "--out", out["fcxt"]],
                 [out["fcxt"]]),
                ("disease", ["disease", "--graph", graph, "--features",
                             feats, "--seed", "0", "--d-emb", "4",
                             "--d-out", "3", "--out", out["fcate"]],
                 [out["fcate"]]),
                ("fuse", ["fuse", "--spatial", out["fspa"], "--category",
                          out["fcate"], "--out", out["fused"]],
                 [out["fused"], out["fused"] + ".layout.json"]),
                ("eval", ["eval", "--gt", ann, "--det", det,
                          "--out", out["report"],
                          "--csv", out["report"] + ".csv"],
                 [out["report"], out["report"] + ".csv"]),
                ("gradcheck", ["gradcheck", "--module", "disease",
                               "--seed", "1"], []),
            ]
            for name, argv, outputs in commands:
                runs = []
                for _ in range(2):
                    proc = subprocess.run(
                        [sys.executable, "-m", "chestrel.cli"] + argv,
                        capture_output=True, cwd=str(tmp_path), timeout=120)
                    assert proc.returncode == 0, (
                        f"{name} failed:\n{proc.stderr.decode()}")
                    runs.append((proc.stdout,
                                 [Path(p).read_bytes() for p in outputs]))
                assert runs[0][0] == runs[1][0], f"{name}: stdout differs"
                for path, a, b in zip(outputs, runs[0][1], runs[1][1]):
                    assert a == b, f"{name}: output {path} differs"
