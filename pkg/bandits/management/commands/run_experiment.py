# bandits/management/commands/run_experiment.py
import logging
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from bandits import config as experiments
from bandits.engine import run_batch
from bandits.exceptions import ConfigError, ContractViolation
from bandits.exports import read_manifest, write_batch

logger = logging.getLogger('bandits')


class Command(BaseCommand):
    help = 'Run an experiment file or shipped preset and write its result files'

    def add_arguments(self, parser):
        parser.add_argument(
            'config',
            nargs='?',
            help='Path of a TOML experiment file, or the name of a preset (e.g. paper-stochastic)'
        )
        parser.add_argument('--trials', type=int, help='Number of trials (default: the [run] section)')
        parser.add_argument('--seed', type=int, help='Root seed (default: the [run] section)')
        parser.add_argument('--out', help='Output directory (default: $SPECTRUM_OUTPUT_DIR/<name>)')
        parser.add_argument('--parallel', type=int, default=1, help='Worker processes for trials (default: 1)')
        parser.add_argument('--per-trial', action='store_true', help='Also write per-trial CSVs and agent snapshots')
        parser.add_argument('--per-round', action='store_true', help='Also write per-round trace and regret CSVs')
        parser.add_argument('--plot', action='store_true', help='Also write PNG line charts')
        parser.add_argument('--from-manifest', help='Re-run exactly what a manifest.json describes')

    def handle(self, *args, **options):
        try:
            config, seed, trials, per_trial, per_round = self._resolve(options)
        except ConfigError as exc:
            raise CommandError(str(exc), returncode=2) from exc
        if trials < 1:
            raise CommandError('--trials must be at least 1', returncode=2)
        if options['parallel'] < 1:
            raise CommandError('--parallel must be at least 1', returncode=2)

        for warning in experiments.review(config).warnings:
            logger.warning(warning)

        out = Path(options['out']) if options['out'] else Path(settings.SPECTRUM_OUTPUT_DIR) / config.name
        try:
            batch = run_batch(config, trials=trials, root_seed=seed, parallelism=options['parallel'],
                              per_round=per_round)
        except ContractViolation as exc:
            raise CommandError(str(exc), returncode=3) from exc
        except ConfigError as exc:
            raise CommandError(str(exc), returncode=2) from exc

        written = write_batch(batch, out, seed, per_trial=per_trial, per_round=per_round, plot=options['plot'])
        final = batch.aggregate().iloc[-1]
        self.stdout.write(self.style.SUCCESS(
            f'✔ {config.name}: {trials} trial(s), mean cumulative regret {final["mean_cum_regret"]:.4g} '
            f'at t={int(final["t"])}; {len(written)} file(s) in {out}'
        ))

    def _resolve(self, options):
        """(config, seed, trials, per_trial, per_round) from the arguments or a manifest."""
        if options['from_manifest']:
            path = Path(options['from_manifest'])
            if not path.is_file():
                raise ConfigError(f'manifest {path} not found')
            data = read_manifest(path)
            config = experiments.parse(data['config_text'], name=data['name'], base_dir=path.parent)
            if config.sha256 != data['config_sha256']:
                raise ConfigError('manifest config_sha256 does not match its config_text')
            return config, data['seed'], data['trials'], data['per_trial'], data['per_round']

        if not options['config']:
            raise ConfigError('a config path or preset name is required')
        config = experiments.load(options['config'], preset_dir=settings.SPECTRUM_PRESET_DIR)
        seed = config.seed if options['seed'] is None else options['seed']
        trials = config.trials if options['trials'] is None else options['trials']
        return config, seed, trials, options['per_trial'], options['per_round']
