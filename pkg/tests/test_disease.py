"""Disease co-occurrence graph and category feature tests."""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chestrel.disease import (
    DiseaseParams,
    DiseaseRelationModule,
    RelationGraph,
    bce_grad,
    bce_loss,
    build_edges,
    category_embeddings,
    count_cooccurrence,
    disease_forward,
    disease_grads,
    global_pool,
    global_scores,
    map_to_regions,
    reduce_cate,
)
from chestrel.exceptions import ShapeError

import oracles


def random_counts(rng, n=13, n_images=50):
    presence = (rng.random((n_images, n)) < 0.4).astype(np.int64)
    return presence.T @ presence


class TestCountCooccurrence:
    def test_single_image_single_category(self):
        counts = count_cooccurrence([{0}], n_categories=3)
        expected = np.zeros((3, 3), dtype=np.int64)
        expected[0, 0] = 1
        assert np.array_equal(counts, expected)

    def test_two_image_hand_count(self):
        counts = count_cooccurrence([{0, 1}, {1}], n_categories=2)
        assert counts.tolist() == [[1, 1], [1, 2]]

    def test_instance_multiplicity_ignored(self):
        counts = count_cooccurrence([[0, 0, 0, 1]], n_categories=2)
        assert counts.tolist() == [[1, 1], [1, 1]]

    def test_seed_5_corpus_matches_brute_force(self, corpus5):
        counts = count_cooccurrence(corpus5.annotations)
        brute = oracles.cooccurrence_brute(
            corpus5.annotations.presence_sets(), 13)
        assert np.array_equal(counts, brute)
        assert np.array_equal(counts, corpus5.cooccurrence)

    def test_out_of_range_category_named(self):
        with pytest.raises(ValueError, match=r"image 1: category index 5"):
            count_cooccurrence([{0}, {5}], n_categories=3)

    def test_raw_sets_require_category_count(self):
        with pytest.raises(ValueError, match="n_categories"):
            count_cooccurrence([{0}])


class TestBuildEdges:
    def test_conditional_ratio(self):
        counts = np.array([[7, 4], [4, 10]], dtype=np.int64)
        edges = build_edges(counts)
        assert edges[1, 0] == 0.4
        assert edges[0, 0] == 1.0 and edges[1, 1] == 1.0

    def test_single_category_corpus(self):
        counts = count_cooccurrence([{0}, {0}, {0}], n_categories=1)
        assert build_edges(counts).tolist() == [[1.0]]

    def test_zero_count_rows_are_zero(self):
        counts = np.zeros((3, 3), dtype=np.int64)
        counts[1, 1] = 4
        edges = build_edges(counts)
        assert edges[0].tolist() == [0.0, 0.0, 0.0]
        assert edges[1, 1] == 1.0

    def test_reciprocal_identity_on_seed_5_corpus(self, corpus5):
        counts = count_cooccurrence(corpus5.annotations)
        edges = build_edges(counts)
        n = counts.shape[0]
        for i in range(n):
            for j in range(n):
                if counts[i, i]:
                    assert edges[i, j] == float(
                        Fraction(int(counts[i, j]), int(counts[i, i])))
                else:
                    assert edges[i, j] == 0.0

    def test_rejects_asymmetric_counts(self):
        with pytest.raises(ValueError, match="symmetric"):
            build_edges(np.array([[2, 1], [0, 2]], dtype=np.int64))

    def test_rejects_pair_count_above_marginal(self):
        with pytest.raises(ValueError, match="marginal"):
            build_edges(np.array([[2, 3], [3, 5]], dtype=np.int64))

    def test_rejects_float_counts(self):
        with pytest.raises(ValueError, match="integer"):
            build_edges(np.eye(2))


class TestRelationGraph:
    def test_from_counts_round_trips_through_file(self, rng, tmp_path):
        counts = random_counts(rng, n=5)
        graph = RelationGraph.from_counts("ABCDE", counts)
        path = tmp_path / "graph.json"
        graph.save(path)
        loaded = RelationGraph.load(path)
        assert loaded.categories == graph.categories
        assert np.array_equal(loaded.counts, graph.counts)
        assert np.array_equal(loaded.edges, graph.edges)

    def test_tampered_edge_rejected(self, rng):
        counts = random_counts(rng, n=4)
        edges = build_edges(counts)
        edges[2, 1] += 1e-9
        with pytest.raises(ValueError, match=r"edges\[2, 1\]"):
            RelationGraph(categories="ABCD", counts=counts, edges=edges)

    def test_permutation_conjugates_counts_and_edges(self, corpus5):
        graph = RelationGraph.from_annotations(corpus5.annotations)
        perm = np.array([5, 0, 12, 7, 3, 1, 11, 2, 9, 4, 8, 10, 6])
        permuted_sets = [frozenset(int(np.where(perm == k)[0][0]) for k in s)
                         for s in corpus5.annotations.presence_sets()]
        counts_p = count_cooccurrence(permuted_sets, n_categories=13)
        assert np.array_equal(counts_p, graph.counts[np.ix_(perm, perm)])
        assert np.array_equal(build_edges(counts_p),
                              graph.edges[np.ix_(perm, perm)])


class TestGlobalScores:
    def test_zero_feature_gives_half_scores(self, rng):
        W_cls = rng.normal(size=(6, 4))
        logits, beta = global_scores(np.zeros(6), W_cls)
        assert logits.tolist() == [0.0] * 4
        assert beta.tolist() == [0.5] * 4

    def test_one_hot_feature_picks_row(self, rng):
        W_cls = rng.normal(size=(6, 4))
        one_hot = np.zeros(6)
        one_hot[2] = 1.0
        logits, _ = global_scores(one_hot, W_cls)
        assert np.allclose(logits, W_cls[2], rtol=0.0, atol=1e-15)

    def test_matches_loop_oracle(self, rng):
        W_cls = rng.normal(size=(7, 5))
        F_s = rng.normal(size=7)
        logits, beta = global_scores(F_s, W_cls)
        exp_logits, exp_beta = oracles.global_scores_loops(F_s, W_cls)
        assert np.allclose(logits, exp_logits, rtol=0.0, atol=1e-12)
        assert np.allclose(beta, exp_beta, rtol=0.0, atol=1e-12)

    def test_width_mismatch(self, rng):
        with pytest.raises(ShapeError, match="W_cls"):
            global_scores(np.zeros(5), rng.normal(size=(6, 4)))


class TestGlobalPool:
    def test_constant_map(self):
        fmap = np.tile(np.array([1.5, -2.0, 0.25]), (4, 5, 1))
        assert global_pool(fmap).tolist() == [1.5, -2.0, 0.25]

    def test_one_by_one_identity(self, rng):
        v = rng.normal(size=6)
        assert np.array_equal(global_pool(v[None, None, :]), v)

    def test_matches_loop_mean(self, rng):
        fmap = rng.normal(size=(3, 4, 5))
        expected = np.zeros(5)
        for c in range(5):
            acc = 0.0
            for i in range(3):
                for j in range(4):
                    acc += fmap[i, j, c]
            expected[c] = acc / 12.0
        assert np.allclose(global_pool(fmap), expected, rtol=0.0, atol=1e-14)


class TestBceLoss:
    def test_half_probability_term(self):
        assert bce_loss(np.zeros(1), np.ones(1)) == pytest.approx(
            0.6931471806, abs=1e-10)
        assert bce_loss(np.zeros(1), np.ones(1)) == pytest.approx(
            math.log(2.0), abs=1e-15)

    def test_saturated_match_is_tiny(self):
        assert bce_loss(np.array([40.0]), np.ones(1)) <= 1e-15
        assert bce_loss(np.array([-40.0]), np.zeros(1)) <= 1e-15

    def test_sum_not_mean(self):
        one = bce_loss(np.zeros(1), np.ones(1))
        four = bce_loss(np.zeros(4), np.ones(4))
        assert four == pytest.approx(4.0 * one, rel=1e-12)

    def test_gradient_is_p_minus_y(self):
        from chestrel.gradcheck import central_diff

        logits = np.array([0.3, -1.2, 2.0])
        targets = np.array([1.0, 0.0, 1.0])
        analytic = bce_grad(logits, targets)
        sig = 1.0 / (1.0 + np.exp(-logits))
        assert np.allclose(analytic, sig - targets, rtol=0.0, atol=1e-12)
        numeric = central_diff(lambda z: bce_loss(z, targets), logits)
        assert np.abs(analytic - numeric).max() <= 1e-8

    def test_extreme_logits_stay_finite(self):
        assert math.isfinite(bce_loss(np.array([700.0, -700.0]),
                                      np.array([0.0, 1.0])))

    @given(st.lists(st.floats(-30, 30), min_size=1, max_size=6),
           st.lists(st.integers(0, 1), min_size=6, max_size=6))
    @settings(max_examples=60, deadline=None)
    def test_nonnegative(self, logits, bits):
        logits = np.asarray(logits, dtype=np.float64)
        targets = np.asarray(bits[: logits.size], dtype=np.float64)
        assert bce_loss(logits, targets) >= 0.0

    def test_targets_outside_unit_interval_rejected(self):
        with pytest.raises(ValueError, match="targets"):
            bce_loss(np.zeros(2), np.array([0.0, 1.5]))


class TestCategoryEmbeddings:
    def test_self_loop_only(self):
        z = category_embeddings(np.ones(1), np.ones((1, 1)),
                                np.array([[3.0, -1.0]]))
        assert z.tolist() == [[3.0, -1.0]]

    def test_two_category_hand_case(self):
        beta = np.array([1.0, 0.5])
        edges = np.array([[1.0, 0.2], [0.8, 1.0]])
        W_emb = np.array([[1.0, 0.0], [0.0, 1.0]])
        z = category_embeddings(beta, edges, W_emb)
        assert np.allclose(z, [[1.0, 0.4], [0.2, 0.5]], rtol=0.0, atol=1e-15)

    def test_zero_scores_give_zero_states(self, rng):
        z = category_embeddings(np.zeros(4), build_edges(random_counts(rng, 4)),
                                rng.normal(size=(4, 6)))
        assert np.array_equal(z, np.zeros((4, 6)))

    def test_matches_loop_oracle(self, rng):
        beta = rng.uniform(0, 1, size=5)
        edges = build_edges(random_counts(rng, 5))
        W_emb = rng.normal(size=(5, 7))
        expected = oracles.embeddings_loops(beta, edges, W_emb)
        assert np.allclose(category_embeddings(beta, edges, W_emb), expected,
                           rtol=0.0, atol=1e-12)

    def test_linear_in_beta_and_weights(self, rng):
        edges = build_edges(random_counts(rng, 4))
        b1, b2 = rng.uniform(0, 1, size=(2, 4))
        w1, w2 = rng.normal(size=(2, 4, 5))
        lhs = category_embeddings(b1 + b2, edges, w1)
        rhs = (category_embeddings(b1, edges, w1)
               + category_embeddings(b2, edges, w1))
        assert np.allclose(lhs, rhs, rtol=0.0, atol=1e-12)
        lhs_w = category_embeddings(b1, edges, w1 + w2)
        rhs_w = (category_embeddings(b1, edges, w1)
                 + category_embeddings(b1, edges, w2))
        assert np.allclose(lhs_w, rhs_w, rtol=0.0, atol=1e-12)


class TestMapToRegions:
    def test_one_hot_row_selects_node_state(self, rng):
        z = rng.normal(size=(4, 6))
        probs = np.zeros((2, 4))
        probs[0, 2] = 1.0
        probs[1, 0] = 1.0
        r = map_to_regions(probs, z)
        assert np.array_equal(r[0], z[2])
        assert np.array_equal(r[1], z[0])

    def test_zero_row_gives_zero_vector(self, rng):
        r = map_to_regions(np.zeros((1, 4)), rng.normal(size=(4, 6)))
        assert np.array_equal(r, np.zeros((1, 6)))

    def test_matches_loop_oracle(self, rng):
        probs = rng.uniform(0, 1, size=(3, 4))
        z = rng.normal(size=(4, 6))
        assert np.allclose(map_to_regions(probs, z),
                           oracles.matmul_loops(probs, z),
                           rtol=0.0, atol=1e-12)


class TestReduceCate:
    def test_zero_input(self, rng):
        out = reduce_cate(np.zeros((2, 4)), rng.normal(size=(4, 3)))
        assert np.array_equal(out, np.zeros((2, 3)))

    def test_identity_block_projects_coordinates(self, rng):
        r = rng.normal(size=(2, 4))
        W_t = np.zeros((4, 2))
        W_t[0, 0] = 1.0
        W_t[3, 1] = 1.0
        assert np.array_equal(reduce_cate(r, W_t), r[:, [0, 3]])

    def test_matches_loop_oracle(self, rng):
        r = rng.normal(size=(3, 5))
        W_t = rng.normal(size=(5, 4))
        assert np.allclose(reduce_cate(r, W_t), oracles.matmul_loops(r, W_t),
                           rtol=0.0, atol=1e-12)


class TestDiseaseForward:
    def test_composition_matches_stagewise_route(self, rng):
        graph = RelationGraph.from_counts("ABCD", random_counts(rng, 4))
        params = DiseaseParams(W_emb=rng.normal(size=(4, 6)),
                               W_t=rng.normal(size=(6, 3)),
                               W_cls=rng.normal(size=(5, 4)))
        probs = rng.uniform(0, 1, size=(2, 4))
        F_s = rng.normal(size=5)
        out = disease_forward(probs, F_s, graph, params)
        logits, beta = global_scores(F_s, params.W_cls)
        z = category_embeddings(beta, graph.edges, params.W_emb)
        assert np.array_equal(out.logits, logits)
        assert np.array_equal(out.beta, beta)
        assert np.array_equal(out.z, z)
        assert np.array_equal(out.f_cate,
                              reduce_cate(map_to_regions(probs, z), params.W_t))
        assert ((out.beta > 0.0) & (out.beta < 1.0)).all()

    def test_full_scalar_chain_oracle(self, rng):
        graph = RelationGraph.from_counts("ABC", random_counts(rng, 3))
        params = DiseaseParams(W_emb=rng.normal(size=(3, 4)),
                               W_t=rng.normal(size=(4, 2)),
                               W_cls=rng.normal(size=(5, 3)))
        probs = rng.uniform(0, 1, size=(2, 3))
        F_s = rng.normal(size=5)
        out = disease_forward(probs, F_s, graph, params)
        logits, beta = oracles.global_scores_loops(F_s, params.W_cls)
        z = oracles.embeddings_loops(beta, graph.edges, params.W_emb)
        r = oracles.matmul_loops(probs, z)
        f_cate = oracles.matmul_loops(r, params.W_t)
        assert np.allclose(out.f_cate, f_cate, rtol=1e-10, atol=1e-12)

    def test_category_count_mismatch(self, rng):
        graph = RelationGraph.from_counts("ABCD", random_counts(rng, 4))
        params = DiseaseParams(W_emb=rng.normal(size=(3, 6)),
                               W_t=rng.normal(size=(6, 3)),
                               W_cls=rng.normal(size=(5, 3)))
        with pytest.raises(ShapeError, match="categories"):
            disease_forward(np.zeros((1, 3)), np.zeros(5), graph, params)


class TestDiseaseGrads:
    def test_zero_cotangent(self, rng):
        graph = RelationGraph.from_counts("ABCD", random_counts(rng, 4))
        params = DiseaseParams(W_emb=rng.normal(size=(4, 6)),
                               W_t=rng.normal(size=(6, 3)),
                               W_cls=rng.normal(size=(5, 4)))
        grads = disease_grads(rng.uniform(0, 1, size=(2, 4)),
                              rng.normal(size=5), graph, params,
                              np.zeros((2, 3)))
        for name, g in grads.as_dict().items():
            assert np.array_equal(g, np.zeros_like(g)), name

    def test_seeded_fixture_passes_finite_difference_check(self):
        from chestrel.gradcheck import check, make_disease_fixture

        fixture = make_disease_fixture(seed=3)
        report = check(fixture.analytic_grads(), fixture, tol=1e-5)
        assert report.passed, report.format_table()

    def test_cotangent_shape_checked(self, rng):
        graph = RelationGraph.from_counts("AB", random_counts(rng, 2))
        params = DiseaseParams(W_emb=rng.normal(size=(2, 3)),
                               W_t=rng.normal(size=(3, 2)),
                               W_cls=rng.normal(size=(4, 2)))
        with pytest.raises(ShapeError, match="cotangent"):
            disease_grads(np.zeros((1, 2)), np.zeros(4), graph, params,
                          np.zeros((2, 2)))


class TestDiseaseRelationModule:
    def test_fit_transform_matches_function_route(self, rng, corpus5):
        module = DiseaseRelationModule(d_emb=8, d_out=4, d_global=6,
                                       random_state=2)
        module.fit(corpus5.annotations)
        probs = rng.uniform(0, 1, size=(3, 13))
        F_s = rng.normal(size=6)
        out = module.transform(probs, F_s)
        direct = disease_forward(probs, F_s, module.graph_, module.params_)
        assert np.array_equal(out, direct.f_cate)
        assert np.array_equal(module.scores_, direct.beta)

    def test_unfitted_transform_raises(self, rng):
        from sklearn.exceptions import NotFittedError
        with pytest.raises(NotFittedError):
            DiseaseRelationModule().transform(np.zeros((1, 13)),
                                              np.zeros(256))

    def test_default_parameter_shapes_match_contract(self):
        params = DiseaseParams.random(seed=0)
        assert params.W_emb.shape == (13, 1024)
        assert params.W_t.shape == (1024, 256)
        assert params.W_cls.shape == (256, 13)
        assert params.element_count() == 13 * 1024 + 1024 * 256 + 256 * 13

    def test_params_file_round_trip(self, rng, tmp_path):
        params = DiseaseParams(W_emb=rng.normal(size=(3, 4)),
                               W_t=rng.normal(size=(4, 2)),
                               W_cls=rng.normal(size=(5, 3)))
        path = tmp_path / "weights.json"
        params.save(path)
        loaded = DiseaseParams.load(path)
        for name in ("W_emb", "W_t", "W_cls"):
            assert np.array_equal(getattr(loaded, name), getattr(params, name))
