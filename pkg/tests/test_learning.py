import math

import numpy as np
import pytest

from dagshare.learning import (
    Dataset,
    GlobalModel,
    LearningError,
    LearningTask,
    StylePath,
    adaptive_gate,
    async_update,
    fedave_baseline,
    freshness,
    gen_dataset,
    gen_eval_set,
    least_squares_fit,
    local_sgd,
    mixing_coefficient,
    mse_loss,
    predict,
    rsu_accept,
    style_weight,
)
from dagshare.learning import test_gap as model_gap
from dagshare.sites import ModelParams


def make_task(seed=3, d=4):
    return LearningTask.from_seed(seed, d)


class TestDataset:
    def test_rejects_empty(self):
        with pytest.raises(LearningError):
            Dataset(np.zeros((0, 3)), np.zeros(0), np.zeros(0))

    def test_rejects_style_out_of_range(self):
        with pytest.raises(LearningError):
            Dataset(np.zeros((2, 3)), np.array([0.5, 1.5]), np.zeros(2))

    def test_rejects_mismatched_lengths(self):
        with pytest.raises(LearningError):
            Dataset(np.zeros((2, 3)), np.zeros(2), np.zeros(3))


class TestGenDataset:
    def test_neutral_style_and_no_noise_gives_shared_labels(self):
        task = make_task()
        rng = np.random.default_rng(0)
        ds = gen_dataset(rng, 50, task, 0.5, 0.0)
        expected = ds.x @ task.w_shared + task.bias
        assert np.allclose(ds.y, expected)

    def test_same_seed_identical(self):
        task = make_task()
        a = gen_dataset(np.random.default_rng(9), 20, task, 0.3, 0.2)
        b = gen_dataset(np.random.default_rng(9), 20, task, 0.3, 0.2)
        assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)

    def test_noiseless_data_admits_exact_linear_fit(self):
        # closed-form least squares is the oracle for the attainable gap
        task = make_task()
        rng = np.random.default_rng(4)
        ds = gen_dataset(rng, 200, task, 0.7, 0.0)
        model = least_squares_fit(ds)
        assert float(model_gap(model, ds)) < 1e-6


class TestTestGap:
    def test_perfect_model_zero_gap(self):
        task = make_task()
        ds = gen_dataset(np.random.default_rng(1), 30, task, 0.5, 0.0)
        exact = ModelParams(
            np.concatenate([task.w_shared, [0.0], [task.bias]])
        )
        assert float(model_gap(exact, ds)) < 1e-12

    def test_single_example_mean(self):
        # label 1.0, prediction 0.8 -> gap 0.2
        ds = Dataset(np.array([[0.8]]), np.array([0.0]), np.array([1.0]))
        model = ModelParams([1.0, 0.0, 0.0])  # predicts x itself
        assert float(model_gap(model, ds)) == pytest.approx(0.2)

    def test_zero_model_gap_is_mean_abs_label(self):
        labels = [0.5, -1.25, 2.0, 0.0, -0.75, 1.5, -2.25, 0.25, 3.0, -0.5]
        # independent recomputation, plain arithmetic on the frozen labels
        expected = sum(abs(v) for v in labels) / len(labels)
        ds = Dataset(np.zeros((10, 2)), np.zeros(10), np.array(labels))
        assert float(model_gap(ModelParams.zeros(4), ds)) == pytest.approx(expected)

    def test_translation_detection(self):
        task = make_task()
        ds = gen_dataset(np.random.default_rng(2), 40, task, 0.5, 0.0)
        exact = ModelParams(np.concatenate([task.w_shared, [0.0], [task.bias]]))
        delta = 0.37
        shifted = ModelParams(exact.theta + np.array([0.0] * task.dim + [0.0, delta]))
        assert float(model_gap(shifted, ds)) == pytest.approx(delta)

    def test_dimension_mismatch_raises(self):
        ds = Dataset(np.zeros((3, 2)), np.zeros(3), np.zeros(3))
        with pytest.raises(LearningError):
            model_gap(ModelParams.zeros(7), ds)


class TestLocalSgd:
    def test_zero_rate_returns_init(self):
        task = make_task()
        ds = gen_dataset(np.random.default_rng(5), 30, task, 0.5, 0.1)
        init = ModelParams(np.arange(task.dim + 2, dtype=float))
        out, _ = local_sgd(init, ds, 3, 8, 0.0, np.random.default_rng(0))
        assert out == init

    def test_single_example_single_step_matches_hand_computation(self):
        x = np.array([[0.5, -1.0]])
        ds = Dataset(x, np.array([0.25]), np.array([2.0]))
        theta0 = np.array([0.1, 0.2, 0.3, 0.4])
        gamma = 0.05
        design = np.array([0.5, -1.0, 0.25, 1.0])
        resid = 2.0 - design @ theta0
        expected = theta0 + 2.0 * gamma * resid * design
        out, _ = local_sgd(ModelParams(theta0), ds, 1, 1, gamma, np.random.default_rng(0))
        assert np.allclose(out.theta, expected)

    def test_full_batch_descent_is_monotone_below_curvature_limit(self):
        task = make_task(seed=8, d=5)
        ds = gen_dataset(np.random.default_rng(11), 120, task, 0.4, 0.0)
        design = ds.design_matrix()
        cov = design.T @ design / len(ds)
        lam_max = float(np.linalg.eigvalsh(cov)[-1])  # eigenvalue oracle
        gamma = 0.9 / (2.0 * lam_max)
        theta = ModelParams.zeros(ds.model_dim)
        losses = [mse_loss(theta, ds)]
        rng = np.random.default_rng(0)
        for _ in range(20):
            theta, _ = local_sgd(theta, ds, 1, len(ds), gamma, rng)
            losses.append(mse_loss(theta, ds))
        assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))
        assert losses[-1] < losses[0]

    def test_divergent_rate_raises_numerical_error(self):
        task = make_task()
        ds = gen_dataset(np.random.default_rng(6), 50, task, 0.5, 0.0)
        with pytest.raises(LearningError, match="non-finite"):
            local_sgd(ModelParams.zeros(ds.model_dim), ds, 50, 8, 1e6,
                      np.random.default_rng(0))

    def test_delay_drawn_from_distribution(self):
        task = make_task()
        ds = gen_dataset(np.random.default_rng(5), 10, task, 0.5, 0.0)
        _, delay = local_sgd(
            ModelParams.zeros(ds.model_dim), ds, 1, 4, 0.01,
            np.random.default_rng(3), delay_dist=lambda r: r.uniform(0.2, 0.4),
        )
        assert 0.2 <= delay <= 0.4


class TestFreshness:
    def test_endpoint_values(self):
        assert freshness(10.0, 10.0) == pytest.approx(1.0)
        assert freshness(0.0, 10.0) == pytest.approx(math.e)
        assert freshness(5.0, 10.0) == pytest.approx(math.exp(0.5))

    def test_outside_window_rejected(self):
        with pytest.raises(LearningError):
            freshness(-0.1, 1.0)
        with pytest.raises(LearningError):
            freshness(1.1, 1.0)

    def test_strictly_decreasing(self):
        values = [freshness(t, 1.0) for t in np.linspace(0, 1, 50)]
        assert all(b < a for a, b in zip(values, values[1:]))

    def test_stale_update_never_mixes_more_than_fresh(self):
        for m in (0.2, 0.5, 0.9):
            fresh = mixing_coefficient(1.0, 10.0, m, 0.5)
            stale = mixing_coefficient(9.0, 10.0, m, 0.5)
            assert stale <= fresh


class TestStyleWeight:
    def test_match_gives_one_under_both_rules(self):
        assert style_weight(0.4, 0.4, "linear") == pytest.approx(1.0)
        assert style_weight(0.4, 0.4, "exponential") == pytest.approx(1.0)

    def test_linear_example(self):
        assert style_weight(0.9, 0.5, "linear") == pytest.approx(0.6)

    def test_exponential_example(self):
        assert style_weight(0.9, 0.5, "exponential") == pytest.approx(math.exp(-0.4))

    def test_maximum_at_average(self):
        for rule in ("linear", "exponential"):
            peak = style_weight(0.5, 0.5, rule)
            for m in np.linspace(0, 1, 21):
                assert style_weight(float(m), 0.5, rule) <= peak

    def test_unknown_rule(self):
        with pytest.raises(LearningError):
            style_weight(0.5, 0.5, "cubic")


class TestAsyncUpdate:
    def _global(self, dim=4):
        return GlobalModel(ModelParams.zeros(dim), 1, 1.0, 0.0)

    def test_full_replacement_when_mixing_one(self):
        g = self._global()
        local = ModelParams(np.ones(4))
        out = async_update(g, local, 0.0, 10.0, 0.5, 0.5)
        assert np.allclose(out.params.theta, local.theta)
        assert out.version == 2
        assert out.last_update == 0.0

    def test_clamp_applies_at_early_times(self):
        # raw weight at t=0 with matched styles is e > 1
        assert mixing_coefficient(0.0, 10.0, 0.5, 0.5) == 1.0

    def test_convex_combination(self):
        g = self._global()
        local = ModelParams(np.ones(4))
        # freshness 1 at t=T; style weight 0.25 via linear rule
        out = async_update(g, local, 10.0, 10.0, 0.9, 0.15)
        assert np.allclose(out.params.theta, 0.25 * np.ones(4))

    def test_dimension_mismatch(self):
        with pytest.raises(LearningError):
            async_update(self._global(4), ModelParams.zeros(5), 1.0, 10.0, 0.5, 0.5)

    def test_result_within_coordinate_interval(self):
        rng = np.random.default_rng(7)
        g = GlobalModel(ModelParams(rng.standard_normal(6)), 1, 1.0, 0.0)
        local = ModelParams(rng.standard_normal(6))
        out = async_update(g, local, 3.0, 10.0, 0.8, 0.3)
        lo = np.minimum(g.params.theta, local.theta)
        hi = np.maximum(g.params.theta, local.theta)
        assert np.all(out.params.theta >= lo - 1e-12)
        assert np.all(out.params.theta <= hi + 1e-12)
        assert np.all(np.isfinite(out.params.theta))

    def test_out_of_order_updates_rejected(self):
        g = GlobalModel(ModelParams.zeros(4), 1, 1.0, 5.0)
        with pytest.raises(LearningError):
            async_update(g, ModelParams.zeros(4), 4.0, 10.0, 0.5, 0.5)

    def test_version_counts_every_accepted_update(self):
        g = self._global()
        for k in range(5):
            g = async_update(g, ModelParams(np.full(4, float(k))), float(k), 10.0, 0.5, 0.5)
        assert g.version == 6

    def test_reference_gap_recomputed_when_testset_given(self):
        task = make_task(d=2)
        rsu = gen_eval_set(np.random.default_rng(0), 50, task, 0.0)
        g = GlobalModel.initial(4, rsu)
        local = least_squares_fit(rsu)
        out = async_update(g, local, 0.0, 10.0, 0.5, 0.5, rsu_testset=rsu)
        assert out.reference_gap < g.reference_gap


class TestGates:
    def test_boundary_uploads(self):
        assert adaptive_gate(0.016, 0.016) is True
        assert adaptive_gate(0.016 + 1e-9, 0.016) is False

    def test_monotone_in_threshold(self):
        rng = np.random.default_rng(13)
        gaps = rng.uniform(0, 1, 100)
        for tight, loose in ((0.2, 0.5), (0.1, 0.9)):
            tight_set = {i for i, g in enumerate(gaps) if adaptive_gate(g, tight)}
            loose_set = {i for i, g in enumerate(gaps) if adaptive_gate(g, loose)}
            assert tight_set <= loose_set

    def test_rsu_accept_perfect_model(self):
        task = make_task()
        rsu = gen_eval_set(np.random.default_rng(2), 100, task, 0.0,
                           styles=np.full(100, 0.5))
        exact = ModelParams(np.concatenate([task.w_shared, [0.0], [task.bias]]))
        assert rsu_accept(exact, rsu, 1e-6)
        assert rsu_accept(exact, rsu, 0.05)

    def test_rsu_rejects_sign_flipped_model(self):
        task = make_task()
        rsu = gen_eval_set(np.random.default_rng(2), 100, task, 0.0,
                           styles=np.full(100, 0.5))
        exact = ModelParams(np.concatenate([task.w_shared, [0.0], [task.bias]]))
        assert not rsu_accept(ModelParams(-exact.theta), rsu, 0.05)

    def test_infinite_epsilon_accepts_everything(self):
        task = make_task()
        rsu = gen_eval_set(np.random.default_rng(2), 50, task, 0.0)
        junk = ModelParams(np.full(task.dim + 2, 1e6))
        assert rsu_accept(junk, rsu, float("inf"))


class TestFedave:
    def test_single_model_identity(self):
        m = ModelParams([1.0, 2.0])
        assert fedave_baseline([m]) == m

    def test_two_model_mean(self):
        out = fedave_baseline([ModelParams.zeros(3), ModelParams([2.0, 2.0, 2.0])])
        assert np.allclose(out.theta, 1.0)

    def test_matches_independent_summation(self):
        rng = np.random.default_rng(21)
        models = [ModelParams(rng.standard_normal(5)) for _ in range(12)]
        # oracle: plain running sum, no numpy mean
        acc = [0.0] * 5
        for m in models:
            for i in range(5):
                acc[i] += float(m.theta[i])
        expected = [v / 12 for v in acc]
        assert np.allclose(fedave_baseline(models).theta, expected, atol=1e-12)


class TestStylePath:
    def test_piecewise_lookup(self):
        path = StylePath([0.0, 1.0, 2.5], [0.1, 0.6, 0.9])
        assert path(0.0) == 0.1
        assert path(0.99) == 0.1
        assert path(1.0) == 0.6
        assert path(3.0) == 0.9

    def test_requires_sorted_breakpoints(self):
        with pytest.raises(LearningError):
            StylePath([1.0, 0.5], [0.2, 0.3])
