import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mcgip.benchmark import run_once
from mcgip.contrastive import (AugmentationPolicy, Embedding, GatedSchedule, StaticSchedule, ToyEncoder,
                               TrainConfig, diagonal_schedule, info_nce, l2_cst, linear_probe,
                               mcgip_batch_loss, mean_pairwise_distance, plain_contrastive_loss,
                               synth_gaze_dataset, train)
from mcgip.contrastive.augment import IDENTITY
from mcgip.contrastive.encoder import PARAM_NAMES, standardize
from mcgip.contrastive.losses import embedding_loss, loss_terms
from mcgip.errors import DegenerateLabels, DivergenceDetected, EmptyPairSet, UnnormalizedEmbedding
from mcgip.pairing import AffinityMatrix, Pair, PairSet, select_pairs

from oracles import gradient_relative_error


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def random_unit(rng, n, d):
    return np.stack([unit(rng.normal(size=d)) for _ in range(n)])


def batch_setup(seed, n=5, side=6):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 1, (n, side, side))
    enc = ToyEncoder.init(side * side, 8, 4, seed=seed)
    return X, enc, AugmentationPolicy(seed=seed)


def gated_pairs(n, seed, t=0.5):
    rng = np.random.default_rng(seed)
    A = rng.uniform(0, 1, (n, n))
    A = (A + A.T) / 2
    np.fill_diagonal(A, 1.0)
    return select_pairs(AffinityMatrix(tuple(f"i{k}" for k in range(n)), A), t, 1.0, seed)


class TestConstraints:
    def test_info_nce_two_views(self):
        zi, zj, zk = unit([1, 0]), unit([1, 0]), unit([0, 1])
        v = info_nce(zi, zj, [zj, zk], tau=1.0)
        assert v == pytest.approx(-math.log(math.e / (math.e + 1)), abs=1e-12)
        assert round(v, 4) == 0.3133

    def test_info_nce_uniform(self):
        z = unit([0.3, -0.2, 0.9])
        assert info_nce(z, z, [z] * 7, tau=0.2) == pytest.approx(math.log(7), abs=1e-12)

    def test_info_nce_large_tau(self):
        rng = np.random.default_rng(0)
        V = random_unit(rng, 6, 5)
        assert info_nce(V[0], V[2], list(V), tau=1e6) == pytest.approx(math.log(6), abs=1e-3)

    def test_info_nce_target_must_be_a_view(self):
        with pytest.raises(ValueError):
            info_nce(unit([1, 0]), unit([0, 1]), [unit([1, 0])])

    def test_unnormalized_rejected(self):
        with pytest.raises(UnnormalizedEmbedding):
            l2_cst(np.array([1.0, 1.0]), unit([1, 0]))
        with pytest.raises(UnnormalizedEmbedding):
            Embedding(np.array([2.0, 0.0]))
        assert Embedding.of([3.0, 4.0]).values.tolist() == [0.6, 0.8]

    def test_l2_values(self):
        a = unit([1, 0])
        assert l2_cst(a, a) == 0
        assert l2_cst(a, -a) == 4
        assert l2_cst(a, unit([0, 1])) == 2

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.floats(0.01, 10))
    def test_ranges(self, seed, tau):
        rng = np.random.default_rng(seed)
        V = random_unit(rng, 5, 4)
        z = unit(rng.normal(size=4))
        assert info_nce(z, V[1], list(V), tau) >= 0
        assert 0 <= l2_cst(z, V[1]) <= 4


class TestBatchLoss:
    def three_image_case(self):
        rng = np.random.default_rng(11)
        Z, V = random_unit(rng, 3, 4), random_unit(rng, 3, 4)
        pairs = PairSet(("a", "b", "c"), (Pair(0, 0, 1, True), Pair(0, 1, 0.8, True),
                                          Pair(1, 1, 1, True), Pair(2, 2, 1, True)), 0.7, 1.0, 0)
        return Z, V, pairs

    @pytest.mark.parametrize("cst", ["infonce", "l2"])
    def test_hand_example_one_direction(self, cst):
        Z, V, pairs = self.three_image_case()

        def c(i, j):
            return info_nce(Z[i], V[j], list(V), 0.2) if cst == "infonce" else l2_cst(Z[i], V[j])
        report, _, _ = embedding_loss(Z, V, pairs, cst, 0.2, pair_order="upper")
        assert report.loss == pytest.approx((c(0, 0) + c(1, 1) + c(2, 2) + c(0, 1)) / 4, abs=1e-12)

    @pytest.mark.parametrize("cst", ["infonce", "l2"])
    def test_hand_example_both_orders(self, cst):
        Z, V, pairs = self.three_image_case()

        def c(i, j):
            return info_nce(Z[i], V[j], list(V), 0.2) if cst == "infonce" else l2_cst(Z[i], V[j])
        both, _, _ = embedding_loss(Z, V, pairs, cst, 0.2)
        assert both.loss == pytest.approx((c(0, 0) + c(1, 1) + c(2, 2) + c(0, 1) + c(1, 0)) / 5, abs=1e-12)
        sym, _, _ = embedding_loss(Z, V, pairs, cst, 0.2, pair_order="symmetrized")
        assert sym.loss == pytest.approx((c(0, 0) + c(1, 1) + c(2, 2) + (c(0, 1) + c(1, 0)) / 2) / 4,
                                         abs=1e-12)

    def test_affinity_weights(self):
        Z, V, pairs = self.three_image_case()
        r, _, _ = embedding_loss(Z, V, pairs, "l2", weight_mode="affinity", pair_order="upper")
        c = [l2_cst(Z[i], V[j]) for i, j in ((0, 0), (1, 1), (2, 2), (0, 1))]
        assert r.loss == pytest.approx((c[0] + c[1] + c[2] + 0.8 * c[3]) / 3.8, abs=1e-12)

    def test_exclude_partners(self):
        Z, V, pairs = self.three_image_case()
        r, _, _ = embedding_loss(Z, V, pairs, "infonce", 0.2, pair_order="upper", exclude_partners=True)
        # 0 and 1 drop each other's views from their own-view denominators;
        # term (0, 1) keeps view 1 as its target
        t00 = info_nce(Z[0], V[0], [V[0], V[2]], 0.2)
        t01 = info_nce(Z[0], V[1], list(V), 0.2)
        t11 = info_nce(Z[1], V[1], [V[1], V[2]], 0.2)
        t22 = info_nce(Z[2], V[2], list(V), 0.2)
        assert r.loss == pytest.approx((t00 + t11 + t22 + t01) / 4, abs=1e-12)

    def test_report_consistent(self):
        X, enc, aug = batch_setup(3)
        r = mcgip_batch_loss(X, gated_pairs(len(X), 3), enc, aug, stream=(0, 0))
        assert abs(r.loss - r.recomputed_loss()) < 1e-9
        assert r.pair_count == len(gated_pairs(len(X), 3).accepted())

    def test_collapse_limit(self):
        X, enc, aug = batch_setup(1)
        const = ToyEncoder(np.zeros_like(enc.W1), np.zeros_like(enc.b1), np.zeros_like(enc.W2),
                           unit(np.arange(1.0, 5.0)))
        r = mcgip_batch_loss(X, PairSet.diagonal([f"i{k}" for k in range(len(X))]), const, aug, cst="l2")
        assert r.loss == 0

    @pytest.mark.parametrize("cst", ["infonce", "l2"])
    @pytest.mark.parametrize("weight_mode", ["binary", "affinity"])
    def test_diagonal_reduction(self, cst, weight_mode):
        X, enc, aug = batch_setup(5)
        views = aug.views(X, (0, 0))
        r = mcgip_batch_loss(X, PairSet.diagonal([f"i{k}" for k in range(len(X))]), enc, views=views,
                             cst=cst, weight_mode=weight_mode)
        assert abs(r.loss - plain_contrastive_loss(X, enc, views, cst)) < 1e-9

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.sampled_from(["infonce", "l2"]),
           st.sampled_from(["both", "symmetrized"]), st.booleans())
    def test_permutation_invariance(self, seed, cst, order, exclude):
        X, enc, aug = batch_setup(seed % 1000, n=6)
        pairs = gated_pairs(6, seed)
        views = aug.views(X)
        perm = np.random.default_rng(seed).permutation(6)
        kw = dict(cst=cst, pair_order=order, exclude_partners=exclude)
        a = mcgip_batch_loss(X, pairs, enc, views=views, **kw).loss
        b = mcgip_batch_loss(X[perm], pairs.reindexed(perm), enc, views=views[perm], **kw).loss
        # "upper" is excluded: its single ordered term per pair follows index order by definition
        assert abs(a - b) < 1e-9

    def test_loss_terms_validation(self):
        pairs = PairSet.diagonal(["a"])
        with pytest.raises(ValueError):
            loss_terms(pairs, weight_mode="soft")
        with pytest.raises(ValueError):
            loss_terms(pairs, pair_order="lower")

    def test_empty_pairs(self):
        Z = random_unit(np.random.default_rng(0), 2, 3)
        with pytest.raises(EmptyPairSet):
            embedding_loss(Z, Z, PairSet(("a", "b"), (), 0.7, 1.0, 0))


class TestGradients:
    @pytest.mark.parametrize("k", range(20))
    def test_matches_finite_differences(self, k):
        assert gradient_relative_error(k) < 1e-4

    @pytest.mark.parametrize("k", range(10))
    def test_truncation_error_shrinks_with_step(self, k):
        # on arbitrary layer shapes the step-1e-4 estimate can carry O(h^2) error
        # near 1e-4; at 1e-5 it must be a hundred times smaller
        assert gradient_relative_error(k, step=1e-5, varied_shapes=True) < 1e-5


class TestEncoder:
    def test_outputs_unit_norm(self):
        X, enc, _ = batch_setup(0)
        assert np.allclose(np.linalg.norm(enc(X), axis=1), 1.0)

    def test_standardize(self):
        x = np.random.default_rng(0).random((4, 10)) * 5 + 3
        s = standardize(x)
        assert np.allclose(s.mean(axis=1), 0) and np.allclose(s.std(axis=1), 1)
        assert np.all(standardize(np.ones((2, 3))) == 0)

    def test_roundtrip_flat(self):
        enc = ToyEncoder.init(12, 5, 3, seed=1)
        assert np.array_equal(enc.with_flat(enc.flat()).flat(), enc.flat())

    def test_dead_input_maps_to_basis_vector(self):
        enc = ToyEncoder.init(9, 4, 3, seed=0)
        dead = ToyEncoder(enc.W1, np.full(4, -100.0), enc.W2, np.zeros(3))
        x = np.random.default_rng(0).random((2, 9))
        z, cache = dead.forward(x, cache=True)
        assert z.tolist() == [[1.0, 0.0, 0.0]] * 2
        grads = dead.backward(np.ones_like(z), cache)
        assert all(np.all(np.isfinite(g)) and not np.any(g) for g in grads.values())

    def test_deterministic_init(self):
        assert np.array_equal(ToyEncoder.init(9, 4, 2, 7).flat(), ToyEncoder.init(9, 4, 2, 7).flat())


class TestAugmentation:
    def test_shape_preserved_and_deterministic(self):
        X = np.random.default_rng(0).random((4, 10, 12))
        aug = AugmentationPolicy(seed=3)
        a, b = aug.views(X, (1, 2)), aug.views(X, (1, 2))
        assert a.shape == X.shape
        assert np.array_equal(a, b)
        assert not np.array_equal(a, aug.views(X, (1, 3)))

    def test_identity(self):
        X = np.random.default_rng(0).random((3, 8, 8))
        assert np.allclose(IDENTITY.views(X), X, atol=1e-12)

    def test_flip_only(self):
        X = np.random.default_rng(0).random((3, 8, 8))
        flipped = AugmentationPolicy(1.0, (1.0, 1.0), 0.0).views(X)
        assert np.allclose(flipped, X[:, :, ::-1], atol=1e-12)

    def test_invalid(self):
        with pytest.raises(ValueError):
            AugmentationPolicy(crop_range=(0.9, 0.5))


class TestTraining:
    def test_zero_lr_bit_exact(self):
        ds = synth_gaze_dataset(5, seed=0)
        enc = ToyEncoder.init(ds.images[0].size, 8, 4, seed=0)
        res = train(ds.images, ds.ids, enc, diagonal_schedule, None, TrainConfig(epochs=1, lr=0.0))
        assert all(np.array_equal(getattr(res.encoder, k), getattr(enc, k)) for k in PARAM_NAMES)
        assert len(res.losses) == 1

    def test_deterministic(self):
        ds = synth_gaze_dataset(6, seed=1)
        enc = ToyEncoder.init(ds.images[0].size, 8, 4, seed=0)
        cfg = TrainConfig(epochs=3, lr=0.3, batch_size=4, seed=2)
        A = AffinityMatrix(tuple(ds.ids), np.ones((12, 12)))
        a = train(ds.images, ds.ids, enc, GatedSchedule(A, 0.5, 0.5, 2), None, cfg)
        b = train(ds.images, ds.ids, enc, GatedSchedule(A, 0.5, 0.5, 2), None, cfg)
        assert a.losses == b.losses
        assert np.array_equal(a.encoder.flat(), b.encoder.flat())

    def test_input_encoder_untouched(self):
        ds = synth_gaze_dataset(3, seed=0)
        enc = ToyEncoder.init(ds.images[0].size, 8, 4, seed=0)
        before = enc.flat().copy()
        train(ds.images, ds.ids, enc, config=TrainConfig(epochs=2, lr=0.5))
        assert np.array_equal(enc.flat(), before)

    def test_divergence(self):
        ds = synth_gaze_dataset(3, seed=0)
        enc = ToyEncoder.init(ds.images[0].size, 8, 4, seed=0)
        with pytest.raises(DivergenceDetected):
            train(ds.images, ds.ids, enc, config=TrainConfig(epochs=3, lr=float("inf")))

    def test_static_schedule_slices(self):
        ids = ["a", "b", "c", "d"]
        ps = PairSet(tuple(ids), (Pair(0, 0, 1, True), Pair(0, 2, 0.9, True), Pair(1, 1, 1, True),
                                  Pair(1, 3, 0.8, False), Pair(2, 2, 1, True), Pair(3, 3, 1, True)), 0.7, 0.5, 0)
        sub = StaticSchedule(ps)(["c", "a", "zz"], 0)
        assert sub.ids == ("c", "a", "zz")
        assert [(p.i, p.j, p.accepted) for p in sub.pairs] == [(0, 0, True), (0, 1, True), (1, 1, True),
                                                              (2, 2, True)]

    def test_benchmark_loss_trace_decreases(self):
        run = run_once(0, 0.7)
        assert len(run.losses) == 50
        assert np.mean(run.losses[-5:]) < np.mean(run.losses[:5])

    def test_mean_pairwise_distance(self):
        Z = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
        assert mean_pairwise_distance(Z) == pytest.approx((2 * math.sqrt(2) + 2) / 3)
        assert mean_pairwise_distance(Z[:1]) == 0.0


class TestProbe:
    def test_separable(self):
        rng = np.random.default_rng(0)
        y = np.repeat([0, 1], 50)
        Z = np.where(y[:, None] == 0, 1.0, -1.0) * np.array([1.0, 0.0]) + rng.normal(0, 0.05, (100, 2))
        assert linear_probe(Z, y) == 1.0

    def test_chance(self):
        rng = np.random.default_rng(1)
        Z = random_unit(rng, 200, 8)
        y = rng.permutation(np.repeat([0, 1], 100))
        acc = linear_probe(Z, y, seed=3)
        assert abs(acc - 0.5) < 3 * math.sqrt(0.25 / 100)

    def test_degenerate(self):
        with pytest.raises(DegenerateLabels):
            linear_probe(np.zeros((4, 2)), [0, 0, 0, 0])
        with pytest.raises(DegenerateLabels):
            linear_probe(np.zeros((4, 2)), [0, 0, 0, 1])


class TestSynth:
    def test_deterministic(self):
        a, b = synth_gaze_dataset(4, seed=9), synth_gaze_dataset(4, seed=9)
        assert np.array_equal(a.images, b.images)
        assert a.gaze == b.gaze and a.ids == b.ids

    def test_balanced_and_in_range(self):
        ds = synth_gaze_dataset(7, (24, 20), seed=2)
        assert ds.images.shape == (14, 20, 24)
        assert ds.images.min() == 0 and ds.images.max() == 1
        assert np.bincount(ds.labels).tolist() == [7, 7]

    def test_centered_fixations_longer(self):
        ds = synth_gaze_dataset(20, seed=0)
        mean_dur = [np.mean(g.durations) for g in ds.gaze]
        assert np.mean([d for d, l in zip(mean_dur, ds.labels) if l == 0]) > \
            np.mean([d for d, l in zip(mean_dur, ds.labels) if l == 1])
