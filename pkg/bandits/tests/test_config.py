"""
Tests for experiment files.

Covers:
- parsing of every scenario and of the shipped presets
- line-anchored errors for malformed and infeasible files
- scripted reward tensors read relative to the file
- the report-only review (separability, gamma clamp, prescribed T0 values)
"""

import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from . import configs
from ..adv_agent import default_tau
from ..config import PRESET_DIR, load, locate, parse, resolve, review
from ..env import AdversaryKind
from ..exceptions import ConfigError
from ..experiment import DOUBLING, SCENARIOS, STOCHASTIC


class ParseTestCase(SimpleTestCase):
    """Test cases for parse."""

    def test_stochastic(self):
        config = parse(configs.STOCHASTIC, name='small')
        self.assertEqual(config.name, 'small')
        self.assertEqual(config.scenario, STOCHASTIC)
        self.assertEqual((config.users, config.M), (4, 3))
        self.assertEqual(config.table.beta, 2)
        self.assertEqual(config.stoch.Tf_bound, 60)
        self.assertEqual(config.trials, 2)
        self.assertEqual(config.seed, 3)
        self.assertEqual(config.user_limit, 6)
        self.assertEqual(len(config.sha256), 64)

    def test_adversarial_defaults(self):
        config = parse(configs.ADVERSARIAL)
        self.assertIsNone(config.table)
        self.assertEqual(config.adversary.kind, AdversaryKind.IID_UNIFORM_FLOOR)
        self.assertEqual((config.adversary.floor_low, config.adversary.floor_high), (0.2, 1.0))
        self.assertEqual(config.y, 0.5)
        self.assertEqual(config.horizon, 400)

    def test_default_tau(self):
        text = configs.DOUBLING.replace('tau = 8\n', '')
        config = parse(text)
        self.assertEqual(config.scenario, DOUBLING)
        self.assertEqual(config.tau, default_tau(3, 2, 0.5))

    def test_events(self):
        config = parse(configs.DYNAMIC_ADVERSARIAL)
        self.assertEqual(config.events, ((300, 'join', 2), (700, 'leave', 0)))
        schedule = config.schedule()
        self.assertEqual(schedule.joins, 1)
        self.assertEqual(schedule.active_users(800), {1, 2})

    def test_presets(self):
        names = sorted(path.stem for path in PRESET_DIR.glob('*.toml'))
        self.assertEqual(names, [
            'doubling-adversarial', 'dynamic-adversarial', 'dynamic-stochastic', 'paper-adversarial',
            'paper-stochastic',
        ])
        for name in names:
            config = load(name)
            self.assertIn(config.scenario, SCENARIOS)
            self.assertEqual(config.name, name)

    def test_reference_presets(self):
        stochastic = load('paper-stochastic')
        self.assertEqual((stochastic.users, stochastic.M, stochastic.trials), (10, 6, 100))
        self.assertEqual((stochastic.stoch.T0, stochastic.stoch.Tx, stochastic.stoch.N0), (1000, 1000, 5))
        # Tf is pinned for the configured ten users: 6 exp(9/5) (1 + ln(10/0.05)) rounded up
        self.assertEqual(stochastic.stoch.fixing_rounds, 229)
        self.assertEqual(stochastic.horizon, stochastic.stoch.schedule_length(10) + 50000)
        adversarial = load('paper-adversarial')
        self.assertEqual((adversarial.users, adversarial.M, adversarial.horizon), (4, 7, 160000))

    def test_unknown_source(self):
        with self.assertRaises(ConfigError):
            resolve('no-such-preset')


class ErrorTestCase(SimpleTestCase):
    """Test cases for line-anchored configuration errors."""

    def assertConfigError(self, text, line, fragment):
        with self.assertRaises(ConfigError) as ctx:
            parse(text)
        self.assertEqual(ctx.exception.line, line)
        self.assertIn(fragment, str(ctx.exception))

    def test_locate(self):
        self.assertEqual(locate(configs.ADVERSARIAL, 'environment'), 2)
        self.assertEqual(locate(configs.ADVERSARIAL, 'environment', 'users'), 4)
        self.assertEqual(locate(configs.ADVERSARIAL, 'run', 'horizon'), 10)
        self.assertIsNone(locate(configs.ADVERSARIAL, 'run', 'cycling_rounds'))

    def test_malformed_toml(self):
        self.assertConfigError('[environment]\nM = \n', 2, 'malformed TOML')

    def test_missing_section(self):
        with self.assertRaises(ConfigError) as ctx:
            parse('[environment]\nM = 3\nusers = 2\n')
        self.assertIn('[algorithm]', str(ctx.exception))

    def test_more_users_than_channels(self):
        self.assertConfigError(configs.ADVERSARIAL.replace('users = 3', 'users = 5'), 4, 'exceed M = 4')

    def test_more_users_than_beta_m(self):
        self.assertConfigError(configs.STOCHASTIC.replace('users = 4', 'users = 7'), 4, 'exceed beta*M = 6')

    def test_n0_above_m(self):
        self.assertConfigError(configs.STOCHASTIC.replace('N0 = 2', 'N0 = 4'), 16, 'N0 must not exceed M = 3')

    def test_n0_below_two(self):
        self.assertConfigError(configs.STOCHASTIC.replace('N0 = 2', 'N0 = 1'), 16, 'algorithm.N0')

    def test_unknown_scenario(self):
        self.assertConfigError(configs.ADVERSARIAL.replace('"adversarial"', '"cooperative"'), 7, 'scenario')

    def test_missing_stochastic_parameters(self):
        self.assertConfigError(configs.STOCHASTIC.replace('T0 = 150\n', ''), 12, 'T0')

    def test_non_monotone_means(self):
        text = configs.STOCHASTIC.replace('[1.00, 0.49, 0.10]', '[0.49, 0.49, 0.10]')
        self.assertConfigError(text, 6, 'strictly decreasing')

    def test_ragged_means(self):
        text = configs.STOCHASTIC.replace('[1.00, 0.49, 0.10]', '[1.00, 0.49]')
        self.assertConfigError(text, 6, 'same number of occupancies')

    def test_events_on_a_static_scenario(self):
        text = configs.ADVERSARIAL.replace('users = 3\n', 'users = 3\nevents = [[10, "join", 3]]\n')
        self.assertConfigError(text, 5, 'dynamic scenario')

    def test_events_over_the_limit(self):
        text = configs.DYNAMIC_ADVERSARIAL.replace('[300, "join", 2]', '[300, "join", 2], [310, "join", 3], '
                                                   '[320, "join", 4]')
        self.assertConfigError(text, 5, 'allowed 1..4')

    def test_tau_below_the_minimum(self):
        self.assertConfigError(configs.DYNAMIC_STOCHASTIC.replace('tau = 600', 'tau = 400'), 19, 'minimum epoch')

    def test_every_error_is_listed(self):
        text = configs.STOCHASTIC.replace('N0 = 2', 'N0 = 1').replace('Tx = 40', 'Tx = 0')
        with self.assertRaises(ConfigError) as ctx:
            parse(text)
        message = str(ctx.exception)
        self.assertIn('algorithm.Tx', message)
        self.assertIn('algorithm.N0', message)


class ScriptedAdversaryTestCase(SimpleTestCase):
    """Test cases for reward tensors read from CSV."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)
        rows = ['t,k,m,reward'] + [f'{t},{k},{m},{(t + k + m) % 5 / 4}' for t in range(8) for k in range(2)
                                   for m in range(3)]
        (self.dir / 'rewards.csv').write_text('\n'.join(rows) + '\n')
        self.text = configs.ADVERSARIAL.replace('M = 4\nusers = 3', 'M = 3\nusers = 2\nadversary = "scripted"\n'
                                                'rewards_csv = "rewards.csv"')

    def tearDown(self):
        self.tmp.cleanup()

    def test_relative_path(self):
        config = parse(self.text.replace('horizon = 400', 'horizon = 8'), base_dir=self.dir)
        self.assertEqual(config.adversary.kind, AdversaryKind.SCRIPTED)
        self.assertEqual(config.adversary.tensor.shape, (8, 2, 3))
        self.assertEqual(config.adversary.tensor[1, 1, 2], 1.0)

    def test_horizon_past_the_tensor(self):
        with self.assertRaises(ConfigError) as ctx:
            parse(self.text, base_dir=self.dir)
        self.assertIn('cover 8 rounds', str(ctx.exception))

    def test_missing_file(self):
        with self.assertRaises(ConfigError) as ctx:
            parse(self.text)
        self.assertIn('not found', str(ctx.exception))


class ReviewTestCase(SimpleTestCase):
    """Test cases for review."""

    def test_experiment_matrix(self):
        result = review(load('paper-stochastic'))
        self.assertTrue(result.ok)
        self.assertIsNotNone(result.separability)
        self.assertFalse(result.separability.satisfied)
        self.assertTrue(any('separability violated' in w for w in result.warnings))
        self.assertEqual(result.info['T0'], 1000)
        self.assertIn('T0_for_user_count', result.info)
        self.assertIn('T0_for_estimates', result.info)

    def test_equal_means_are_reported(self):
        text = configs.STOCHASTIC.replace('[1.00, 0.49, 0.10]', '[0.49, 0.49, 0.10]')
        result = review(parse(text, strict=False))
        self.assertFalse(result.ok)
        self.assertEqual(result.separability.worst_gap, 0.0)
        self.assertTrue(any('strictly decreasing' in p for p in result.problems))

    def test_gamma_clamp_warning(self):
        """M = 7 needs 16 epochs; a horizon of 100 gives 10."""
        text = configs.ADVERSARIAL.replace('M = 4', 'M = 7').replace('horizon = 400', 'horizon = 100')
        result = review(parse(text))
        self.assertEqual(result.info['epochs'], 10)
        self.assertEqual(result.info['gamma'], 1.0)
        self.assertTrue(any('gamma clamped' in w for w in result.warnings))

    def test_minimum_tau(self):
        result = review(parse(configs.DYNAMIC_STOCHASTIC))
        self.assertEqual(result.info['minimum_tau'], 500)
        self.assertTrue(result.ok)
