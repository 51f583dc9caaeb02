"""
Tests for result files.

Covers:
- which files write_batch produces per scenario and flag
- manifest contents and read_manifest
- byte-identical files for identical inputs
"""

import tempfile
from pathlib import Path

import pandas as pd
from django.test import SimpleTestCase

from . import configs
from .. import __version__
from ..config import parse
from ..engine import run_batch
from ..exports import (
    AGGREGATE, ESTIMATION, EXP3P, EXPONENT, MANIFEST, REGRET, SNAPSHOTS, TRACE, TRIALS, read_manifest, write_batch,
)
from ..plots import ESTIMATION_PNG, REGRET_PNG


class WriteBatchTestCase(SimpleTestCase):
    """Test cases for write_batch."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.out = Path(self.tmp.name)
        self.config = parse(configs.ADVERSARIAL, name='small-adversarial')

    def tearDown(self):
        self.tmp.cleanup()

    def names(self, paths):
        return sorted(path.name for path in paths)

    def test_default_files(self):
        batch = run_batch(self.config, trials=2)
        written = write_batch(batch, self.out, seed=5)
        self.assertEqual(self.names(written), sorted([AGGREGATE, EXPONENT, MANIFEST]))
        aggregate = pd.read_csv(self.out / AGGREGATE)
        self.assertEqual(list(aggregate.columns), ['t', 'mean_cum_regret', 'stderr'])
        self.assertEqual(int(aggregate['t'].iloc[-1]), 400)

    def test_per_trial_and_per_round_files(self):
        batch = run_batch(self.config, trials=2, per_round=True)
        written = write_batch(batch, self.out, seed=5, per_trial=True, per_round=True)
        self.assertEqual(self.names(written), sorted([
            AGGREGATE, EXPONENT, TRIALS, SNAPSHOTS, EXP3P, TRACE, REGRET, MANIFEST,
        ]))
        trials = pd.read_csv(self.out / TRIALS)
        self.assertEqual(sorted(trials['trial'].unique()), [0, 1])
        trace = pd.read_csv(self.out / TRACE)
        self.assertEqual(len(trace), 2 * 3 * 400)
        regret = pd.read_csv(self.out / REGRET)
        self.assertEqual(list(regret.columns), ['trial', 't', 'inst', 'cum'])

    def test_stochastic_files(self):
        config = parse(configs.STOCHASTIC, name='small-stochastic')
        batch = run_batch(config, trials=1)
        written = write_batch(batch, self.out, seed=3, per_trial=True, plot=True)
        self.assertEqual(self.names(written), sorted([
            AGGREGATE, ESTIMATION, TRIALS, SNAPSHOTS, REGRET_PNG, ESTIMATION_PNG, MANIFEST,
        ]))
        trials = pd.read_csv(self.out / TRIALS)
        self.assertIn('cum_regret_realized', trials.columns)
        self.assertGreater((self.out / REGRET_PNG).stat().st_size, 0)

    def test_manifest(self):
        batch = run_batch(self.config, trials=2)
        write_batch(batch, self.out, seed=11, per_trial=True)
        data = read_manifest(self.out / MANIFEST)
        self.assertEqual(data['name'], 'small-adversarial')
        self.assertEqual(data['scenario'], 'adversarial')
        self.assertEqual(data['config_text'], configs.ADVERSARIAL)
        self.assertEqual(data['config_sha256'], self.config.sha256)
        self.assertEqual((data['seed'], data['trials']), (11, 2))
        self.assertTrue(data['per_trial'])
        self.assertFalse(data['per_round'])
        self.assertEqual(data['version'], __version__)
        self.assertIn(MANIFEST, data['outputs'])
        self.assertIn(EXP3P, data['outputs'])

    def test_identical_inputs_give_identical_files(self):
        first, second = self.out / 'first', self.out / 'second'
        for out in (first, second):
            write_batch(run_batch(self.config, root_seed=42), out, seed=42, per_trial=True)
        names = sorted(path.name for path in first.iterdir())
        self.assertEqual(names, sorted(path.name for path in second.iterdir()))
        for name in names:
            self.assertEqual((first / name).read_bytes(), (second / name).read_bytes(), name)
