"""
Tests for regret benchmarks and diagnostics.

Covers:
- checkpoints and the stochastic oracle
- expected and realized stochastic regret on hand-built traces
- best assignment (exhaustive and solver), segmented benchmarks and their monotonicity
- non-negative stochastic regret over random placements
- streaming folds against the full-trace functions
- growth exponent, tail slope, aggregation and estimation errors
"""

import itertools
import math

import numpy as np
from django.test import SimpleTestCase

from ..adv_agent import run_dynamic_adv, run_multiuser
from ..env import REFERENCE_MEANS, AdversaryModel, RewardTable, UserSchedule
from ..exceptions import ConfigError
from ..loop import Trace
from ..metrics import (
    AdversarialRegretFold, RegretSeries, StochasticOracle, StochasticRegretFold, adversarial_benchmark,
    adversarial_regret, aggregate, best_assignment, checkpoints, estimation_error_series, growth_exponent,
    segmented_benchmark, stochastic_regret, tail_slope,
)
from ..rng import TrialStreams
from ..stoch_agent import StochConfig, run_stochastic


class CheckpointTestCase(SimpleTestCase):
    """Test cases for checkpoints."""

    def test_every_round_for_short_runs(self):
        self.assertEqual(checkpoints(10).tolist(), list(range(1, 11)))

    def test_horizon_is_always_last(self):
        points = checkpoints(2500)
        self.assertEqual(points[0], 3)
        self.assertEqual(points[-2], 2499)
        self.assertEqual(points[-1], 2500)
        self.assertEqual(checkpoints(10, every=4).tolist(), [4, 8, 10])


class StochasticRegretTestCase(SimpleTestCase):
    """Test cases for the stochastic oracle and regret."""

    def setUp(self):
        self.table = RewardTable([[0.9, 0.5, 0.2], [0.8, 0.4, 0.1]])
        self.oracle = StochasticOracle(self.table)

    def test_optimal_value(self):
        f_star, value = self.oracle.optimal(3)
        self.assertEqual(f_star.tolist(), [2, 1])
        self.assertAlmostEqual(value, 1.8)

    def test_system_reward(self):
        self.assertAlmostEqual(float(self.oracle.system_reward([2, 1])), 1.8)
        # four users on a channel with beta = 2 earn nothing
        self.assertEqual(float(self.oracle.system_reward([4, 0])), 0.0)
        np.testing.assert_allclose(self.oracle.system_reward([[2, 1], [3, 0]]), [1.8, 0.6])

    def test_regret_is_never_negative(self):
        oracle = StochasticOracle(RewardTable(REFERENCE_MEANS, variance=0.01))
        rng = np.random.default_rng(8)
        for _ in range(100):
            K = int(rng.integers(1, 19))
            f = np.bincount(rng.integers(6, size=K), minlength=6)
            self.assertGreaterEqual(oracle.optimal(K)[1] - float(oracle.system_reward(f)), -1e-12)

    def test_regret_of_a_hand_built_trace(self):
        """Round 0 plays f*, round 1 puts all three users on channel 0."""
        trace = Trace(
            actions=np.array([[0, 0, 1], [0, 0, 0]]),
            rewards=np.array([[0.5, 0.5, 0.8], [0.1, 0.2, 0.3]]),
            collided=np.array([[True, True, False], [True, True, True]]),
            occupancy=np.array([[2, 1], [3, 0]]),
        )
        expected = stochastic_regret(self.table, trace)
        np.testing.assert_allclose(expected.instantaneous, [0.0, 1.2], atol=1e-12)
        np.testing.assert_allclose(expected.cumulative, [0.0, 1.2], atol=1e-12)
        self.assertEqual(expected.t.tolist(), [1, 2])
        realized = stochastic_regret(self.table, trace, realized=True)
        np.testing.assert_allclose(realized.instantaneous, [0.0, 1.2], atol=1e-12)
        self.assertEqual(realized.benchmark, 'realized')

    def test_series_frame_columns(self):
        frame = RegretSeries(t=np.array([1, 2]), cumulative=np.array([0.5, 1.0]), benchmark='expected').frame()
        self.assertEqual(list(frame.columns), ['t', 'inst', 'cum'])
        self.assertTrue(frame['inst'].isna().all())

    def test_fold_matches_the_full_trace(self):
        table = RewardTable(REFERENCE_MEANS[:3, :3], variance=0.01)
        cfg = StochConfig(M=3, beta=2, T0=100, Tx=30, N0=2, Tf_bound=40, known_parameters=True)
        points = checkpoints(600, every=50)
        fold = StochasticRegretFold(table, points)
        run = run_stochastic(cfg, table, 4, 600, TrialStreams(1, 0), observers=[fold])
        full = stochastic_regret(table, run.trace)
        np.testing.assert_allclose(fold.regret, full.cumulative[points - 1], atol=1e-9)
        realized = stochastic_regret(table, run.trace, realized=True)
        np.testing.assert_allclose(fold.realized_regret, realized.cumulative[points - 1], atol=1e-9)
        self.assertEqual(fold.collisions[-1], int(run.trace.collided.sum()))


class AssignmentTestCase(SimpleTestCase):
    """Test cases for best_assignment and the adversarial benchmarks."""

    def test_small_matrix(self):
        value, channels = best_assignment([[1.0, 2.0], [3.0, 1.0]])
        self.assertEqual(value, 5.0)
        self.assertEqual(channels, (1, 0))

    def test_two_users_three_channels(self):
        value, channels = best_assignment([[5.0, 1.0, 0.0], [4.0, 4.0, 0.0]])
        self.assertEqual(value, 9.0)
        self.assertEqual(channels, (0, 1))

    def test_matches_enumeration_on_random_matrices(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            M = int(rng.integers(2, 8))
            K = int(rng.integers(1, min(M, 5) + 1))
            C = rng.uniform(size=(K, M))
            value, channels = best_assignment(C)
            brute = max(C[np.arange(K), list(perm)].sum() for perm in itertools.permutations(range(M), K))
            self.assertAlmostEqual(value, brute)
            self.assertEqual(len(set(channels)), K)
            self.assertAlmostEqual(float(C[np.arange(K), list(channels)].sum()), value)

    def test_more_users_than_channels(self):
        with self.assertRaises(ConfigError):
            best_assignment(np.ones((3, 2)))

    def test_solver_agrees_with_enumeration(self):
        """Five users on twelve channels exceed the enumeration limit."""
        C = np.random.default_rng(3).uniform(size=(5, 12))
        value, channels = best_assignment(C)
        brute = max(C[np.arange(5), list(perm)].sum() for perm in itertools.permutations(range(12), 5))
        self.assertAlmostEqual(value, brute)
        self.assertEqual(len(set(channels)), 5)

    def test_adversarial_benchmark(self):
        gains = np.array([
            [[1.0, 0.0], [0.0, 1.0]],
            [[1.0, 0.0], [1.0, 0.0]],
        ])
        # user 0 on channel 0, user 1 on channel 1: 2 + 1
        self.assertEqual(adversarial_benchmark(gains), 3.0)
        self.assertEqual(adversarial_benchmark(gains, T=1), 2.0)
        self.assertEqual(adversarial_benchmark(gains, K=1), 2.0)

    def test_benchmark_grows_with_the_horizon(self):
        gains = np.random.default_rng(5).uniform(size=(60, 3, 4))
        values = [adversarial_benchmark(gains, T=T) for T in range(1, 61)]
        self.assertTrue(np.all(np.diff(values) >= -1e-12))

    def test_segmented_benchmark(self):
        """User 1 joins at round 1; each interval gets its own assignment."""
        gains = np.array([
            [[0.5, 0.1], [0.0, 0.0]],
            [[0.2, 0.9], [0.3, 0.8]],
        ])
        schedule = UserSchedule(1, 2, events=[(1, 'join', 1)])
        self.assertAlmostEqual(segmented_benchmark(gains, schedule), 0.5 + 1.2)
        self.assertAlmostEqual(segmented_benchmark(gains, schedule, upto=1), 0.5)

    def test_fold_matches_the_full_trace(self):
        points = checkpoints(300, every=25)
        fold = AdversarialRegretFold(3, 4, points)
        run = run_multiuser(300, 3, 4, AdversaryModel(M=4), TrialStreams(2, 0), observers=[fold])
        full = adversarial_regret(run.trace.gains, run.trace, points=points)
        np.testing.assert_allclose(fold.regret, full.cumulative, atol=1e-9)

    def test_segmented_fold_matches_the_full_trace(self):
        schedule = UserSchedule(2, 300, events=[(70, 'join', 2), (180, 'leave', 0)])
        points = checkpoints(300, every=20)
        fold = AdversarialRegretFold(schedule.n_slots, 3, points)
        run = run_dynamic_adv(8, schedule, 3, AdversaryModel(M=3), TrialStreams(2, 0), observers=[fold])
        full = adversarial_regret(run.trace.gains, run.trace, schedule=schedule, points=points)
        np.testing.assert_allclose(fold.regret, full.cumulative, atol=1e-9)


class FitTestCase(SimpleTestCase):
    """Test cases for growth_exponent, tail_slope and aggregate."""

    def test_power_law_exponent(self):
        t = np.arange(100, 1001, 100)
        report = growth_exponent(t, 3 * t ** 0.75)
        self.assertTrue(report.ok)
        self.assertAlmostEqual(report.slope, 0.75)
        self.assertAlmostEqual(report.intercept, math.log(3))
        self.assertAlmostEqual(report.r_squared, 1.0)
        self.assertEqual((report.t_start, report.t_end, report.points), (100, 1000, 10))

    def test_non_positive_points_are_skipped(self):
        t = np.arange(1, 8)
        values = np.array([-1.0, 0.0, 3.0, 4.0, 5.0, 6.0, 7.0])
        report = growth_exponent(t, values)
        self.assertEqual(report.skipped, 2)
        self.assertEqual(report.points, 5)
        self.assertTrue(report.ok)

    def test_too_few_points(self):
        report = growth_exponent([1, 2, 3], [1.0, 2.0, 3.0])
        self.assertFalse(report.ok)
        self.assertTrue(math.isnan(report.slope))
        self.assertEqual(set(report.as_dict()), {
            'slope', 'intercept', 'r_squared', 't_start', 't_end', 'points', 'skipped', 'ok',
        })

    def test_tail_slope(self):
        t = np.arange(1, 101)
        self.assertAlmostEqual(tail_slope(t, 2 * t + 5), 2.0)

    def test_aggregate(self):
        frame = aggregate([10, 20], [[1.0, 2.0], [3.0, 4.0]])
        self.assertEqual(list(frame.columns), ['t', 'mean_cum_regret', 'stderr'])
        np.testing.assert_allclose(frame['mean_cum_regret'], [2.0, 3.0])
        np.testing.assert_allclose(frame['stderr'], [1.0, 1.0])
        single = aggregate([10, 20], [[1.0, 2.0]])
        np.testing.assert_allclose(single['stderr'], [0.0, 0.0])


class EstimationErrorTestCase(SimpleTestCase):
    """Test cases for estimation_error_series."""

    def test_errors(self):
        table = RewardTable(REFERENCE_MEANS)
        progress = [
            {'round': 200, 'K_hat': 9, 'mu_hat': None, 'f_star': None},
            {'round': 1000, 'K_hat': 10, 'mu_hat': REFERENCE_MEANS[:, :3] + 0.01, 'f_star': None},
        ]
        frame = estimation_error_series(progress, 10, table)
        self.assertEqual(frame['round'].tolist(), [200, 1000])
        self.assertEqual(frame['k_error'].tolist(), [1, 0])
        self.assertTrue(math.isnan(frame['mu_error'][0]))
        self.assertAlmostEqual(frame['mu_error'][1], 0.01)
