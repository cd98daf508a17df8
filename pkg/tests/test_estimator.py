"""
Tests for frequency fitting, state prediction and measurement estimation.
"""

import itertools
import math

import numpy as np
import pytest

from imposter_sim.errors import ArgumentError, ConfigError, DomainError, UndefinedPosteriorError
from imposter_sim.estimator import (
    Belief,
    EstimatorConfig,
    FrequencyTables,
    ImposterEstimator,
    accuracy,
    candidate_pages_needed,
    combinations,
    estimate_measurement,
    estimate_measurement_multi,
    evaluate_accuracy,
    fit,
    measurement_posterior,
    predict_state,
    predict_state_multi,
    run_imposter_estimation,
    runner_up,
    score_steps,
    spray_budget_bytes,
)
from imposter_sim.ics_model import HistorianLog, LogRecord, random_model, simulate


def _hand_log(state_sizes=(2,)):
    return HistorianLog(
        states=np.array([[0], [0], [0], [1], [1]]),
        measurements=np.array([[0], [1], [0], [2], [2]]),
        meas_values=((10, 20, 30),),
        state_sizes=state_sizes,
        parents=(0,),
    )


class TestFit:
    """Frequency tables learned from a historian log."""

    def test_transition_counts_without_smoothing(self):
        tables = fit(_hand_log(), alpha=0.0)
        np.testing.assert_allclose(tables.trans_counts[0], [[2, 1], [0, 1]])
        np.testing.assert_allclose(tables.transition_matrix(0), [[2 / 3, 1 / 3], [0, 1]])

    def test_laplace_smoothing(self):
        tables = fit(_hand_log(), alpha=1.0)
        np.testing.assert_allclose(tables.transition_matrix(0), [[0.6, 0.4], [1 / 3, 2 / 3]])

    def test_emission_and_prior_counts(self):
        tables = fit(_hand_log(), alpha=0.0)
        np.testing.assert_allclose(tables.obs_counts[0], [[2, 1, 0], [0, 0, 2]])
        np.testing.assert_allclose(tables.priors[0], [2, 1, 2])

    def test_unseen_row_becomes_uniform(self):
        tables = fit(_hand_log(state_sizes=(3,)), alpha=0.0)
        np.testing.assert_allclose(tables.transition_matrix(0)[2], [1 / 3] * 3)

    def test_too_short_log_rejected(self):
        log = HistorianLog(np.array([[0]]), np.zeros((1, 0)))
        with pytest.raises(ArgumentError):
            fit(log)

    def test_negative_smoothing_rejected(self):
        with pytest.raises(ArgumentError):
            fit(_hand_log(), alpha=-1.0)

    def test_tables_are_read_only(self):
        tables = fit(_hand_log())
        with pytest.raises(ValueError):
            tables.trans_counts[0][0, 0] = 5

    def test_long_log_recovers_kernel(self, two_state_model):
        log = simulate(two_state_model, [0], 10_000, np.random.default_rng(17))
        tables = fit(log, alpha=0.0)
        np.testing.assert_allclose(
            tables.transition_matrix(0), two_state_model.transition[0], atol=0.02
        )
        np.testing.assert_allclose(
            tables.emission_matrix(0), two_state_model.observation[0], atol=0.03
        )

    def test_json_round_trip(self, joint_model):
        import json

        log = simulate(joint_model, [0, 0], 300, np.random.default_rng(4))
        tables = fit(log)
        restored = FrequencyTables.from_dict(json.loads(tables.to_json()))
        for a, b in zip(restored.emission_matrices, tables.emission_matrices):
            np.testing.assert_allclose(a, b)
        assert restored.multivariate == frozenset({0})


class TestStatePrediction:
    """Chapman-Kolmogorov prediction against an enumeration oracle."""

    @staticmethod
    def _oracle(kernel, prior):
        n = kernel.shape[0]
        out = np.zeros(n)
        for i, j in itertools.product(range(n), repeat=2):
            out[j] += prior[i] * kernel[i, j]
        return out

    def test_prediction_matches_enumeration(self):
        rng = np.random.default_rng(11)
        for trial in range(50):
            sizes = [int(n) for n in rng.integers(2, 5, size=int(rng.integers(1, 3)))]
            model = random_model(trial, sizes)
            log = simulate(model, [0] * len(sizes), 60, np.random.default_rng(trial))
            tables = fit(log)
            belief = Belief(tuple(rng.dirichlet(np.ones(n)) for n in sizes))
            for i in range(len(sizes)):
                got = predict_state(tables, belief, i)[i]
                want = self._oracle(tables.transition_matrix(i), belief[i])
                np.testing.assert_allclose(got, want, atol=1e-9)
                assert got.sum() == pytest.approx(1.0, abs=1e-9)

    def test_only_the_predicted_variable_changes(self, joint_model):
        tables = fit(simulate(joint_model, [0, 0], 200, np.random.default_rng(0)))
        belief = Belief.one_hot([1, 0], [3, 2])
        predicted = predict_state(tables, belief, 0)
        np.testing.assert_array_equal(predicted[1], belief[1])

    def test_flat_belief_through_two_state_kernel(self):
        tables = FrequencyTables(
            trans_counts=(np.array([[9, 1], [2, 8]]),),
            obs_counts=(np.array([[1, 1], [1, 1]]),),
            priors=(np.array([1, 1]),),
            parents=(0,),
            meas_values=((0, 1),),
        )
        got = predict_state(tables, Belief.uniform([2]), 0)[0]
        np.testing.assert_allclose(got, [0.55, 0.45])

    def test_two_sensors_sharpen_a_flat_belief(self):
        tables = FrequencyTables(
            trans_counts=(np.eye(2),),
            obs_counts=(np.array([[8, 2], [2, 8]]), np.array([[7, 3], [3, 7]])),
            priors=(np.array([1, 1]), np.array([1, 1])),
            parents=(0, 0),
            meas_values=((0, 1), (0, 1)),
        )
        got = predict_state_multi(tables, Belief.uniform([2]), 0, {0: 0, 1: 0})[0]
        np.testing.assert_allclose(got, [0.56 / 0.62, 0.06 / 0.62])
        assert got[0] == pytest.approx(0.903, abs=1e-3)

    def test_unnormalized_belief_rejected(self, two_state_model):
        tables = fit(simulate(two_state_model, [0], 50, np.random.default_rng(0)))
        with pytest.raises(ArgumentError):
            predict_state(tables, Belief((np.array([0.5, 0.6]),)), 0)

    def test_unknown_variable_rejected(self, two_state_model):
        tables = fit(simulate(two_state_model, [0], 50, np.random.default_rng(0)))
        with pytest.raises(DomainError):
            predict_state(tables, Belief.uniform([2]), 4)

    def test_joint_prediction_conditions_then_propagates(self, joint_model):
        tables = fit(simulate(joint_model, [0, 0], 500, np.random.default_rng(5)))
        prior = np.array([0.2, 0.5, 0.3])
        belief = Belief((prior, np.array([0.5, 0.5])))
        observed = {0: 1, 1: 2}
        got = predict_state_multi(tables, belief, 0, observed)[0]

        posterior = prior * tables.emission_matrices[0][:, 1] * tables.emission_matrices[1][:, 2]
        posterior /= posterior.sum()
        want = self._oracle(tables.transition_matrix(0), posterior)
        np.testing.assert_allclose(got, want, atol=1e-9)

    def test_joint_prediction_needs_observations(self, joint_model):
        tables = fit(simulate(joint_model, [0, 0], 100, np.random.default_rng(5)))
        belief = Belief.uniform([3, 2])
        with pytest.raises(ArgumentError):
            predict_state_multi(tables, belief, 0, {})
        with pytest.raises(ArgumentError):
            predict_state_multi(tables, belief, 0, {2: 0})

    def test_joint_prediction_with_impossible_observation(self):
        tables = fit(_hand_log(), alpha=0.0)
        belief = Belief.one_hot([0], [2])
        with pytest.raises(UndefinedPosteriorError):
            predict_state_multi(tables, belief, 0, {0: 2})


class TestMeasurementEstimation:
    """Naive Bayes estimates with a cutoff."""

    def test_posterior_matches_conditional_frequencies(self):
        tables = fit(_hand_log(), alpha=0.0)
        np.testing.assert_allclose(measurement_posterior(tables, 0, 0), [2 / 3, 1 / 3, 0])
        np.testing.assert_allclose(measurement_posterior(tables, 1, 0), [0, 0, 1])

    def test_posterior_sums_to_one_on_random_tables(self):
        rng = np.random.default_rng(21)
        for _ in range(200):
            n, q = int(rng.integers(2, 5)), int(rng.integers(2, 6))
            tables = FrequencyTables(
                trans_counts=(rng.integers(0, 20, size=(n, n)) + 1,),
                obs_counts=(rng.integers(0, 20, size=(n, q)) + 1,),
                priors=(rng.integers(0, 20, size=q) + 1,),
                parents=(0,),
                meas_values=(tuple(range(q)),),
            )
            post = measurement_posterior(tables, int(rng.integers(n)), 0)
            assert post.sum() == pytest.approx(1.0, abs=1e-9)
            assert np.all(post >= 0)

    def test_scaling_counts_keeps_the_estimate(self):
        rng = np.random.default_rng(23)
        for _ in range(100):
            n, q = int(rng.integers(2, 5)), int(rng.integers(2, 6))
            trans = rng.integers(0, 20, size=(n, n)) + 1
            obs = rng.integers(0, 20, size=(n, q)) + 1
            prior = rng.integers(0, 20, size=q) + 1
            scale = float(rng.uniform(0.5, 50.0))
            tables, scaled = (
                FrequencyTables((trans * s,), (obs * s,), (prior * s,), (0,), (tuple(range(q)),))
                for s in (1.0, scale)
            )
            x_k = int(rng.integers(n))
            a, b = measurement_posterior(tables, x_k, 0), measurement_posterior(scaled, x_k, 0)
            assert int(np.argmax(a)) == int(np.argmax(b))
            np.testing.assert_allclose(a, b, atol=1e-12)

    def test_cutoff_accepts_and_rejects(self):
        tables = fit(_hand_log(), alpha=0.0)
        accepted = estimate_measurement(tables, 0, 0, cutoff=0.5)
        assert accepted.index == 0 and accepted.value == 10 and accepted.accepted
        rejected = estimate_measurement(tables, 0, 0, cutoff=0.7)
        assert rejected.index == 0 and not rejected.accepted

    def test_unseen_parent_state_is_undefined(self):
        tables = fit(_hand_log(state_sizes=(3,)), alpha=0.0)
        with pytest.raises(UndefinedPosteriorError):
            measurement_posterior(tables, 2, 0)

    def test_multi_estimate_takes_emission_mode(self):
        tables = fit(_hand_log(), alpha=0.0)
        est = estimate_measurement_multi(tables, 1, 0)
        assert est.index == 2 and est.value == 30 and est.accepted

    def test_runner_up(self):
        assert runner_up(np.array([0.2, 0.5, 0.3])) == 2
        assert runner_up(np.array([1.0])) == -1


class TestImposterEstimator:
    """The estimator front end."""

    @pytest.fixture(autouse=True)
    def setup(self, joint_model):
        """Set up test fixtures."""
        self.model = joint_model
        self.log = simulate(joint_model, [0, 0], 2000, np.random.default_rng(9))
        self.tables = fit(self.log)

    def test_strategies_registered(self):
        estimator = ImposterEstimator(self.tables)
        assert set(estimator.strategies) == {"univariate", "multivariate"}

    def test_known_states_are_kept(self):
        last = self.log.record(len(self.log))
        result = ImposterEstimator(self.tables).estimate(
            Belief.one_hot(last.x, [3, 2]), known_states=[2, 1]
        )
        assert result.x_hat.tolist() == [2, 1]
        np.testing.assert_array_equal(result.state_posteriors, [1.0, 1.0])

    def test_prediction_uses_last_measurements(self):
        last = self.log.record(len(self.log))
        belief = Belief.one_hot(last.x, [3, 2])
        result = run_imposter_estimation(
            self.tables, EstimatorConfig(), belief, last_measurements=last.y
        )
        expected = predict_state_multi(self.tables, belief, 0, {0: last.y[0], 1: last.y[1]})[0]
        assert result.x_hat[0] == int(np.argmax(expected))
        assert result.mode == "multivariate"
        assert result.M == 2 and result.P == 3

    def test_univariate_mode(self):
        belief = Belief.one_hot([1, 0], [3, 2])
        result = ImposterEstimator(self.tables, EstimatorConfig(mode="univariate")).estimate(belief)
        assert result.mode == "univariate"
        assert result.x_hat[0] == int(np.argmax(self.tables.transition_matrix(0)[1]))

    def test_high_cutoff_rejects_everything(self):
        belief = Belief.one_hot([0, 0], [3, 2])
        config = EstimatorConfig(cutoff=1.0, mode="univariate")
        result = ImposterEstimator(self.tables, config).estimate(belief)
        assert result.rejected == [0, 1, 2]
        assert result.y_hat == (None, None, None)

    def test_high_cutoff_rejects_joint_estimates(self):
        last = self.log.record(len(self.log))
        belief = Belief.one_hot(last.x, [3, 2])
        config = EstimatorConfig(cutoff=1.0)
        result = ImposterEstimator(self.tables, config).estimate(
            belief, last_measurements=last.y
        )
        assert result.mode == "multivariate"
        assert result.rejected == [0, 1, 2]
        assert result.y_hat == (None, None, None)

    def test_joint_estimates_accepted_above_cutoff(self):
        last = self.log.record(len(self.log))
        belief = Belief.one_hot(last.x, [3, 2])
        result = ImposterEstimator(self.tables, EstimatorConfig(cutoff=0.0)).estimate(
            belief, last_measurements=last.y
        )
        assert result.rejected == []
        assert all(v is not None for v in result.y_hat)

    @pytest.mark.parametrize("mode", ["univariate", "multivariate"])
    def test_rejections_grow_with_cutoff(self, mode):
        last = self.log.record(len(self.log))
        belief = Belief.one_hot(last.x, [3, 2])
        previous = set()
        for cutoff in np.linspace(0.0, 1.0, 21):
            config = EstimatorConfig(cutoff=float(cutoff), mode=mode)
            result = ImposterEstimator(self.tables, config).estimate(
                belief, last_measurements=last.y
            )
            assert previous <= set(result.rejected)
            previous = set(result.rejected)
        assert previous == {0, 1, 2}

    def test_dimension_checks(self):
        estimator = ImposterEstimator(self.tables)
        with pytest.raises(ArgumentError):
            estimator.estimate(Belief.uniform([3]))
        with pytest.raises(ArgumentError):
            estimator.estimate(Belief.uniform([3, 2]), known_states=[0])

    def test_least_confident_has_alternative(self):
        result = ImposterEstimator(self.tables).estimate(Belief.one_hot([0, 0], [3, 2]))
        kind, var_id = result.least_confident()
        assert kind in ("state", "measurement")
        alternates = result.state_alternates if kind == "state" else result.meas_alternates
        assert alternates[var_id] >= 0

    def test_rows_and_csv(self, temp_dir):
        result = ImposterEstimator(self.tables).estimate(Belief.one_hot([0, 0], [3, 2]))
        rows = result.to_rows(self.model)
        assert [r["var"] for r in rows] == ["x0", "x1", "y0", "y1", "y2"]
        path = result.to_csv(temp_dir / "estimate.csv", self.model)
        assert path.read_text().splitlines()[0] == "var,kind,estimate,posterior,accepted"

    def test_accuracy_counts_rejected_as_wrong(self):
        belief = Belief.one_hot([0, 0], [3, 2])
        config = EstimatorConfig(cutoff=1.0, mode="univariate")
        result = ImposterEstimator(self.tables, config).estimate(belief, known_states=[0, 0])
        truth = LogRecord(1, (0, 0), tuple(int(i) for i in result.y_index))
        assert accuracy(result, truth).measurement == 0.0
        assert accuracy(result, truth).state == 1.0

    def test_score_steps_range_checked(self):
        estimator = ImposterEstimator(self.tables)
        with pytest.raises(ArgumentError):
            score_steps(estimator, self.log, 1, 10)
        result = score_steps(estimator, self.log, 1900, 2000)
        assert 0.0 <= result.state <= 1.0

    def test_score_steps_conditions_measurements_on_true_states(self, mocker):
        estimator = ImposterEstimator(self.tables)
        spy = mocker.spy(estimator, "estimate")
        score_steps(estimator, self.log, 1990, 1995)
        calls = spy.call_args_list
        supplied = [c.kwargs["known_states"] for c in calls if "known_states" in c.kwargs]
        assert supplied == [self.log.record(k).x for k in range(1990, 1996)]

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            EstimatorConfig(cutoff=1.5)
        with pytest.raises(ConfigError):
            EstimatorConfig(mode="bogus")
        with pytest.raises(ConfigError):
            EstimatorConfig.from_dict({"cutof": 0.4})


class TestCombinatorics:
    """Exact search-space sizing."""

    def test_single_boolean_needs_two_pages(self):
        combo = combinations([2])
        assert combo.c_x == 2
        assert combo.pages == 2
        assert combo.pages_bytes == 8192
        assert combo.attempts == 1

    def test_empty_categories_add_nothing(self):
        combo = combinations([], [3, 4])
        assert combo.pages == 12

    def test_domain_size_zero_rejected(self):
        with pytest.raises(ArgumentError):
            combinations([2, 0])

    def test_spray_budget(self):
        assert spray_budget_bytes(1.2) == 1_228_800_000
        with pytest.raises(ArgumentError):
            spray_budget_bytes(0)

    def test_warehouse_search_space(self, warehouse):
        combo = combinations(warehouse.model.state_sizes, warehouse.model.meas_sizes)
        assert math.log10(combo.c_x) == pytest.approx(200.38, abs=0.01)
        assert math.log10(combo.c_y) == pytest.approx(96.33, abs=0.01)
        assert math.log10(combo.pages_gb) == pytest.approx(194.98, abs=0.01)
        assert math.log10(combo.attempts) == pytest.approx(194.90, abs=0.01)

    @pytest.mark.performance
    def test_warehouse_search_space_speed(self, benchmark, warehouse):
        sizes, meas = list(warehouse.model.state_sizes), list(warehouse.model.meas_sizes)
        combo = benchmark(combinations, sizes, meas)
        assert combo.attempts > 0

    def test_candidate_pages(self):
        assert candidate_pages_needed(1.0) == 1
        assert candidate_pages_needed(0.91) == 2
        assert candidate_pages_needed(0.2) == 2
        with pytest.raises(ArgumentError):
            candidate_pages_needed(0.0)


@pytest.mark.slow
class TestWarehouseAccuracy:
    """One-step estimation accuracy on the warehouse plant."""

    def test_accuracy_over_seeds(self, warehouse):
        results = [
            evaluate_accuracy(warehouse.model, seed, training_length=10_000, test_steps=20)
            for seed in range(10)
        ]
        assert np.mean([r.state for r in results]) >= 0.85
        assert np.mean([r.measurement for r in results]) >= 0.85

    def test_accuracy_grows_with_training(self, warehouse):
        def mean_state_accuracy(length):
            runs = [
                evaluate_accuracy(warehouse.model, seed, length, test_steps=20, horizon=10_000)
                for seed in range(5)
            ]
            return np.mean([r.state for r in runs])

        short, medium, long = (mean_state_accuracy(n) for n in (100, 1_000, 10_000))
        assert medium >= short
        assert long >= medium - 0.005

    @pytest.mark.memory
    def test_training_memory_usage(self, warehouse):
        import tracemalloc

        tracemalloc.start()
        evaluate_accuracy(warehouse.model, 0, training_length=2_000, test_steps=5)
        current, peak = tracemalloc.get_traced_memory()
        tracemalloc.stop()

        assert peak < 200 * 1024 * 1024

    def test_horizon_before_training_rejected(self, warehouse):
        with pytest.raises(ArgumentError):
            evaluate_accuracy(warehouse.model, 0, training_length=100, horizon=50)
