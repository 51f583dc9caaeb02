"""
Tests for the management commands.

Covers:
- run_experiment output, reproducibility and --from-manifest reruns
- exit codes for configuration errors (2) and broken contracts (3)
- validate_config reports
"""

import tempfile
from io import StringIO
from pathlib import Path

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from . import configs
from ..exports import AGGREGATE, MANIFEST, TRIALS, read_manifest


class CommandTestCase(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def write_config(self, name, text):
        path = self.dir / f'{name}.toml'
        path.write_text(text, encoding='utf-8')
        return path

    def call(self, name, *args):
        out = StringIO()
        call_command(name, *args, stdout=out)
        return out.getvalue()


class RunExperimentTestCase(CommandTestCase):
    """Test cases for run_experiment."""

    def setUp(self):
        super().setUp()
        self.config = self.write_config('small', configs.ADVERSARIAL)

    def run_into(self, out, *args):
        return self.call('run_experiment', str(self.config), '--trials', '1', '--out', str(out), *args)

    def test_success_message(self):
        output = self.run_into(self.dir / 'out')
        self.assertIn('✔ small: 1 trial(s), mean cumulative regret', output)
        self.assertIn('at t=400', output)
        self.assertTrue((self.dir / 'out' / AGGREGATE).is_file())
        self.assertTrue((self.dir / 'out' / MANIFEST).is_file())

    def test_flags_reach_the_manifest(self):
        self.run_into(self.dir / 'out', '--seed', '9', '--per-trial')
        data = read_manifest(self.dir / 'out' / MANIFEST)
        self.assertEqual((data['seed'], data['trials'], data['per_trial']), (9, 1, True))
        self.assertTrue((self.dir / 'out' / TRIALS).is_file())

    def test_same_seed_same_bytes(self):
        first, second = self.dir / 'first', self.dir / 'second'
        self.run_into(first, '--seed', '42', '--per-trial')
        self.run_into(second, '--seed', '42', '--per-trial')
        for path in sorted(first.iterdir()):
            self.assertEqual(path.read_bytes(), (second / path.name).read_bytes(), path.name)

    def test_rerun_from_manifest(self):
        first, second = self.dir / 'first', self.dir / 'second'
        self.run_into(first, '--seed', '42')
        self.call('run_experiment', '--from-manifest', str(first / MANIFEST), '--out', str(second))
        for name in (AGGREGATE, MANIFEST):
            self.assertEqual((first / name).read_bytes(), (second / name).read_bytes(), name)

    def test_tampered_manifest(self):
        self.run_into(self.dir / 'first')
        manifest = self.dir / 'first' / MANIFEST
        manifest.write_text(manifest.read_text().replace('horizon = 400', 'horizon = 300'))
        with self.assertRaises(CommandError) as ctx:
            self.call('run_experiment', '--from-manifest', str(manifest), '--out', str(self.dir / 'second'))
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertIn('config_sha256', str(ctx.exception))

    def test_config_error_exit_code(self):
        broken = self.write_config('broken', configs.ADVERSARIAL.replace('users = 3', 'users = 5'))
        with self.assertRaises(CommandError) as ctx:
            self.call('run_experiment', str(broken), '--out', str(self.dir / 'out'))
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertIn('line 4', str(ctx.exception))
        self.assertFalse((self.dir / 'out').exists())

    def test_unknown_preset(self):
        with self.assertRaises(CommandError) as ctx:
            self.call('run_experiment', 'no-such-preset', '--out', str(self.dir / 'out'))
        self.assertEqual(ctx.exception.returncode, 2)

    def test_invalid_trial_count(self):
        with self.assertRaises(CommandError) as ctx:
            self.run_into(self.dir / 'out', '--trials', '0')
        self.assertEqual(ctx.exception.returncode, 2)

    def test_contract_violation_exit_code(self):
        config = self.write_config('incomplete', configs.INCOMPLETE_ESTIMATE)
        with self.assertRaises(CommandError) as ctx:
            self.call('run_experiment', str(config), '--out', str(self.dir / 'out'))
        self.assertEqual(ctx.exception.returncode, 3)
        self.assertIn('no collision-free sample', str(ctx.exception))


class ValidateConfigTestCase(CommandTestCase):
    """Test cases for validate_config."""

    def test_experiment_preset(self):
        output = self.call('validate_config', 'paper-stochastic')
        self.assertIn('paper-stochastic: stochastic, K=10, M=6', output)
        self.assertIn('separability violated', output)
        self.assertIn('  T0 = 1000', output)
        self.assertIn('✔ paper-stochastic is valid', output)

    def test_equal_means(self):
        text = configs.STOCHASTIC.replace('[1.00, 0.49, 0.10]', '[0.49, 0.49, 0.10]')
        output = self.call('validate_config', str(self.write_config('flat', text)))
        self.assertIn('separability violated: worst gap 0', output)
        self.assertIn('problem: channel 0: means must be strictly decreasing in occupancy', output)
        self.assertIn('✘ 1 problem(s) in flat', output)

    def test_gamma_clamp(self):
        text = configs.ADVERSARIAL.replace('M = 4', 'M = 7').replace('horizon = 400', 'horizon = 100')
        output = self.call('validate_config', str(self.write_config('short', text)))
        self.assertIn('warning: gamma clamped to 1', output)
        self.assertIn('  epochs = 10', output)
        self.assertIn('✔ short is valid', output)

    def test_malformed_file(self):
        path = self.write_config('malformed', '[environment]\nM = \n')
        with self.assertRaises(CommandError) as ctx:
            self.call('validate_config', str(path))
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertIn('line 2', str(ctx.exception))
