"""Feature track: scoring, rank counts, objectives against brute-force
oracles, analytic gradients against finite differences, metrics against
hand-computed values, and the grid trainer."""

import math
import warnings

import numpy as np
import pytest

from robirank import data, losses, ltr
from robirank.errors import DivergenceError
from robirank.losses import TransformKind

# hand evaluation of the reversed-order 3-item example:
# gains (0,1,3) at discounts 1/log2(2..4) over ideal gains (3,1,0)
NDCG_REVERSED_3 = 0.58688267143572


def naive_sigma0(t):
    return math.log2(1.0 + 2.0 ** (-t))


def make_context(rng, n_items, dim, cid="q0", weight=1.0, labels=None):
    feats = rng.normal(size=(n_items, dim))
    if labels is None:
        labels = rng.integers(0, 3, size=n_items).astype(float)
        labels[int(rng.integers(n_items))] = 2.0
    ids = [f"{i:04d}" for i in range(n_items)]
    return ltr.ContextBlock(cid, ids, feats, np.asarray(labels, float), weight)


def make_dataset(rng, n_contexts=3, n_items=5, dim=5):
    ctxs = [make_context(rng, n_items, dim, cid=f"q{c}") for c in range(n_contexts)]
    return ltr.RankingDataset(ctxs, dim)


class TestScore:
    def test_zero_weights(self):
        m = ltr.LinearModel(np.zeros(4))
        assert ltr.score(m, np.ones(4)) == 0.0

    def test_basis_projection(self):
        m = ltr.LinearModel(np.array([1.0, 0.0, 0.0]))
        assert ltr.score(m, np.array([3.5, -1.0, 9.0])) == 3.5

    def test_matches_naive_sum(self):
        rng = np.random.default_rng(1)
        w = rng.normal(size=5)
        f = rng.normal(size=5)
        expected = sum(float(w[i]) * float(f[i]) for i in range(5))
        np.testing.assert_allclose(ltr.score(ltr.LinearModel(w), f), expected, rtol=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            ltr.score(ltr.LinearModel(np.zeros(3)), np.zeros(4))


class TestRankOf:
    def setup_method(self):
        feats = np.array([[1.0], [3.0], [2.0], [3.0]])
        self.ctx = ltr.ContextBlock("q", list("abcd"), feats, np.zeros(4))
        self.model = ltr.LinearModel(np.array([1.0]))

    def test_counts_strictly_higher(self):
        assert [ltr.rank_of(self.model, self.ctx, i) for i in range(4)] == [3, 0, 2, 0]

    def test_top_item_rank_zero(self):
        assert ltr.rank_of(self.model, self.ctx, 1) == 0

    def test_all_ties_rank_zero(self):
        model = ltr.LinearModel(np.array([0.0]))
        assert all(ltr.rank_of(model, self.ctx, i) == 0 for i in range(4))

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            ltr.rank_of(self.model, self.ctx, 4)

    def test_matches_sort_position_for_distinct_scores(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            ds = make_dataset(rng, n_contexts=1, n_items=8, dim=3)
            model = ltr.LinearModel(rng.normal(size=3))
            ctx = ds.contexts[0]
            s = ctx.features @ model.omega
            order = np.argsort(-s)
            for pos, idx in enumerate(order):
                assert ltr.rank_of(model, ctx, int(idx)) == pos


class TestObjectives:
    def test_basic_at_zero_weights(self):
        rng = np.random.default_rng(2)
        ds = make_dataset(rng)
        model = ltr.LinearModel(np.zeros(5))
        expected = sum(
            ctx.weight * float(ltr.exp2_gain(ctx.scores).sum()) * (ctx.n_items - 1)
            for ctx in ds.contexts
        )
        np.testing.assert_allclose(ltr.objective_basic(model, ds, 0.0), expected, rtol=1e-12)

    def test_single_active_pair(self):
        # two items, gains (1, 0): only one ordered pair contributes
        feats = np.array([[1.0], [0.0]])
        ctx = ltr.ContextBlock("q", ["a", "b"], feats, np.array([1.0, 0.0]))
        ds = ltr.RankingDataset([ctx], 1)
        for w in (-2.0, 0.0, 1.5):
            model = ltr.LinearModel(np.array([w]))
            np.testing.assert_allclose(
                ltr.objective_basic(model, ds, 0.0),
                losses.logistic_loss(w),  # margin is w * (1 - 0)
                rtol=1e-12,
            )

    def test_basic_matches_bruteforce(self):
        rng = np.random.default_rng(3)
        ds = make_dataset(rng, n_contexts=3, n_items=5, dim=4)
        model = ltr.LinearModel(rng.normal(size=4))
        expected = 0.0
        for ctx in ds.contexts:
            s = [ltr.score(model, ctx.features[i]) for i in range(ctx.n_items)]
            for i in range(ctx.n_items):
                gain = 2.0 ** ctx.scores[i] - 1.0
                for j in range(ctx.n_items):
                    if i != j:
                        expected += ctx.weight * gain * naive_sigma0(s[i] - s[j])
        np.testing.assert_allclose(ltr.objective_basic(model, ds, 0.0), expected, rtol=1e-12)

    def test_robirank_trivial_values(self):
        feats = np.array([[1.0], [0.0]])
        ctx = ltr.ContextBlock("q", ["a", "b"], feats, np.array([1.0, 0.0]))
        ds = ltr.RankingDataset([ctx], 1)
        zero = ltr.LinearModel(np.zeros(1))
        np.testing.assert_allclose(
            ltr.objective_robirank(zero, ds, 0.0, TransformKind.RHO1), 1.0, rtol=1e-12
        )
        np.testing.assert_allclose(
            ltr.objective_robirank(zero, ds, 0.0, TransformKind.RHO2),
            0.369070246428543,
            rtol=1e-12,
        )

    def test_robirank_matches_bruteforce(self):
        rng = np.random.default_rng(4)
        ds = make_dataset(rng, n_contexts=2, n_items=6, dim=3)
        model = ltr.LinearModel(rng.normal(size=3))
        for kind, rho in (
            (TransformKind.RHO1, lambda t: math.log2(t + 1.0)),
            (TransformKind.RHO2, lambda t: 1.0 - 1.0 / math.log2(t + 2.0)),
        ):
            expected = 0.0
            for ctx in ds.contexts:
                s = ctx.features @ model.omega
                for i in range(ctx.n_items):
                    inner = sum(
                        naive_sigma0(float(s[i] - s[j]))
                        for j in range(ctx.n_items)
                        if j != i
                    )
                    expected += ctx.weight * (2.0 ** ctx.scores[i] - 1.0) * rho(inner)
            np.testing.assert_allclose(
                ltr.objective_robirank(model, ds, 0.0, kind), expected, rtol=1e-10
            )

    def test_bound_chain(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            ds = make_dataset(rng, n_contexts=2, n_items=5, dim=4)
            model = ltr.LinearModel(rng.normal(size=4))
            l1 = ltr.objective_robirank(model, ds, 0.0, TransformKind.RHO1)
            l2 = ltr.objective_robirank(model, ds, 0.0, TransformKind.RHO2)
            lx = ltr.objective_indicator(model, ds)
            assert l1 > l2 > lx

    def test_regularizer(self):
        rng = np.random.default_rng(6)
        ds = make_dataset(rng)
        model = ltr.LinearModel(rng.normal(size=5))
        base = ltr.objective_robirank(model, ds, 0.0)
        reg = ltr.objective_robirank(model, ds, 2.0)
        np.testing.assert_allclose(reg - base, float(model.omega @ model.omega), rtol=1e-12)


class TestGradient:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(8)
        h = 1e-5
        for i in range(20):
            ds = make_dataset(rng, n_contexts=2, n_items=4 + i % 3, dim=5)
            w = rng.normal(scale=0.5, size=5)
            lam = [0.0, 0.1][i % 2]
            kind = list(TransformKind)[i % 2]
            grad = ltr.gradient_robirank(ltr.LinearModel(w), ds, lam, kind)
            fd = np.empty(5)
            for j in range(5):
                e = np.zeros(5)
                e[j] = h
                fd[j] = (
                    ltr.objective_robirank(ltr.LinearModel(w + e), ds, lam, kind)
                    - ltr.objective_robirank(ltr.LinearModel(w - e), ds, lam, kind)
                ) / (2 * h)
            np.testing.assert_allclose(grad, fd, rtol=1e-5, atol=1e-10)

    def test_single_pair_chain_rule(self):
        """One ordered pair: the gradient is the hand chain-rule product."""
        rng = np.random.default_rng(9)
        f1, f2 = rng.normal(size=(2, 3))
        ctx = ltr.ContextBlock("q", ["a", "b"], np.stack([f1, f2]), np.array([1.0, 0.0]), 1.3)
        ds = ltr.RankingDataset([ctx], 3)
        w = rng.normal(size=3)
        lam = 0.2
        t = float((f1 - f2) @ w)
        expected = (
            1.3
            * 1.0
            * losses.transform_grad(TransformKind.RHO1, losses.logistic_loss(t))
            * losses.logistic_loss_grad(t)
            * (f1 - f2)
            + lam * w
        )
        np.testing.assert_allclose(
            ltr.gradient_robirank(ltr.LinearModel(w), ds, lam), expected, rtol=1e-12
        )

    def test_saturated_margins_leave_only_regularizer(self):
        feats = np.array([[100.0], [-100.0]])
        ctx = ltr.ContextBlock("q", ["a", "b"], feats, np.array([2.0, 0.0]))
        ds = ltr.RankingDataset([ctx], 1)
        model = ltr.LinearModel(np.array([5.0]))  # margin 1000, losses saturated
        lam = 0.7
        grad = ltr.gradient_robirank(model, ds, lam)
        np.testing.assert_allclose(grad, lam * model.omega, atol=1e-12)


class TestDcgMetrics:
    def test_perfect_ordering_gives_one(self):
        rng = np.random.default_rng(10)
        feats = rng.normal(size=(6, 1))
        order = np.argsort(-feats[:, 0])
        labels = np.empty(6)
        labels[order] = [2, 2, 1, 1, 0, 0]
        ctx = ltr.ContextBlock("q", [f"{i}" for i in range(6)], feats, labels)
        model = ltr.LinearModel(np.array([1.0]))
        for k in (1, 3, 6, 10):
            assert ltr.ndcg_at_k(model, ctx, k) == 1.0

    def test_zero_gain_context(self):
        ctx = ltr.ContextBlock("q", ["a", "b"], np.array([[1.0], [2.0]]), np.zeros(2))
        model = ltr.LinearModel(np.array([1.0]))
        assert ltr.dcg(model, ctx) == 0.0
        assert ltr.ndcg_at_k(model, ctx, 5) == 1.0

    def test_reversed_three_item_example(self):
        feats = np.array([[0.0], [1.0], [2.0]])  # model scores reverse the labels
        ctx = ltr.ContextBlock("q", ["a", "b", "c"], feats, np.array([2.0, 1.0, 0.0]))
        model = ltr.LinearModel(np.array([1.0]))
        np.testing.assert_allclose(
            ltr.ndcg_at_k(model, ctx, 3), NDCG_REVERSED_3, atol=1e-12
        )

    def test_k_below_one_rejected(self):
        ctx = ltr.ContextBlock("q", ["a", "b"], np.eye(2), np.array([1.0, 0.0]))
        with pytest.raises(ValueError):
            ltr.ndcg_at_k(ltr.LinearModel(np.zeros(2)), ctx, 0)

    def test_tie_break_by_item_id(self):
        feats = np.zeros((2, 1))  # all scores tie
        ctx = ltr.ContextBlock("q", ["b", "a"], feats, np.array([2.0, 0.0]))
        model = ltr.LinearModel(np.array([1.0]))
        # item "a" (index 1, gain 0) sorts first among ties
        np.testing.assert_allclose(
            ltr.ndcg_at_k(model, ctx, 1), 0.0, atol=1e-15
        )

    def test_indicator_objective_is_total_gain_minus_dcg(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            ds = make_dataset(rng, n_contexts=3, n_items=5, dim=3)
            model = ltr.LinearModel(rng.normal(size=3))
            total_gain = sum(
                ctx.weight * float(ltr.exp2_gain(ctx.scores).sum()) for ctx in ds.contexts
            )
            total_dcg = sum(ltr.dcg(model, ctx) for ctx in ds.contexts)
            np.testing.assert_allclose(
                ltr.objective_indicator(model, ds), total_gain - total_dcg, rtol=1e-12
            )


class TestTrain:
    def test_planted_instance_recovers_ranking(self):
        train, valid, _ = data.make_synthetic_rank(20, 12, 5, 0.0, seed=13)
        model = ltr.train(train, valid, ltr.TrainConfig(lambda_grid=(1e-5, 1e-1)))
        assert ltr.mean_ndcg(model, train, 10) >= 0.95

    def test_regularization_shrinks_weights(self):
        train, valid, _ = data.make_synthetic_rank(10, 8, 4, 0.0, seed=14)
        small = ltr.train(train, valid, ltr.TrainConfig(lambda_grid=(1e-6,)))
        huge = ltr.train(train, valid, ltr.TrainConfig(lambda_grid=(1e6,)))
        assert np.linalg.norm(huge.omega) < np.linalg.norm(small.omega)

    def test_initialization_insensitivity(self):
        train, valid, test = data.make_synthetic_rank(15, 10, 4, 0.1, seed=15)
        zero = ltr.train(train, valid, ltr.TrainConfig(lambda_grid=(1e-5,), init="zeros"))
        rand = ltr.train(
            train, valid, ltr.TrainConfig(lambda_grid=(1e-5,), init="gaussian", seed=3)
        )
        gap = abs(ltr.mean_ndcg(zero, test, 10) - ltr.mean_ndcg(rand, test, 10))
        assert gap <= 0.02

    def test_deterministic(self):
        train, valid, _ = data.make_synthetic_rank(8, 8, 4, 0.0, seed=16)
        cfg = ltr.TrainConfig(lambda_grid=(1e-5, 1e-1), init="gaussian", seed=5)
        m1 = ltr.train(train, valid, cfg)
        m2 = ltr.train(train, valid, cfg)
        assert np.array_equal(m1.omega, m2.omega)

    def test_divergence_names_lambda(self):
        # a label of 2000 overflows the exponential gain, making the
        # objective infinite
        ctx = ltr.ContextBlock(
            "q0", ["a", "b"], np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([2000.0, 0.0])
        )
        bad = ltr.RankingDataset([ctx], 2)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            with pytest.raises(DivergenceError, match="lambda=0.5"):
                ltr.train(bad, bad, ltr.TrainConfig(lambda_grid=(0.5,)))

    def test_feature_dim_mismatch(self):
        a, va, _ = data.make_synthetic_rank(4, 6, 3, 0.0, seed=1)
        b, vb, _ = data.make_synthetic_rank(4, 6, 4, 0.0, seed=1)
        with pytest.raises(ValueError):
            ltr.train(a, vb, ltr.TrainConfig(lambda_grid=(1e-3,)))


class TestValidation:
    def test_dataset_rejects_single_item_context(self):
        ctx = [ltr.ContextBlock("q", ["a", "b"], np.zeros((2, 2)), np.zeros(2))]
        ltr.RankingDataset(ctx, 2)  # fine
        with pytest.raises(ValueError, match="item"):
            bad = ltr.ContextBlock("q", ["a"], np.zeros((1, 2)), np.zeros(1))
            ltr.RankingDataset([bad], 2)

    def test_duplicate_item_ids_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            ltr.ContextBlock("q", ["a", "a"], np.zeros((2, 2)), np.zeros(2))

    def test_negative_scores_rejected(self):
        with pytest.raises(ValueError):
            ltr.ContextBlock("q", ["a", "b"], np.zeros((2, 2)), np.array([1.0, -1.0]))
