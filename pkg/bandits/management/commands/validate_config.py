# bandits/management/commands/validate_config.py
from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from bandits import config as experiments
from bandits.exceptions import ConfigError


class Command(BaseCommand):
    help = 'Check an experiment file against the model invariants and print a report'

    def add_arguments(self, parser):
        parser.add_argument('config', help='Path of a TOML experiment file, or the name of a preset')

    def handle(self, *args, **options):
        try:
            config = experiments.load(options['config'], preset_dir=settings.SPECTRUM_PRESET_DIR, strict=False)
        except ConfigError as exc:
            raise CommandError(str(exc), returncode=2) from exc
        result = experiments.review(config)

        self.stdout.write(f'{config.name}: {config.scenario}, K={config.users}, M={config.M}, T={config.horizon}')
        report = result.separability
        if report is not None:
            status = 'holds' if report.satisfied else 'violated'
            self.stdout.write(
                f'separability {status}: worst gap {report.worst_gap:.4g}, threshold {report.threshold:.4g}'
            )
        for key, value in sorted(result.info.items()):
            self.stdout.write(f'  {key} = {value}')
        for warning in result.warnings:
            self.stdout.write(self.style.WARNING(f'warning: {warning}'))
        for problem in result.problems:
            self.stdout.write(self.style.ERROR(f'problem: {problem}'))
        if result.ok:
            self.stdout.write(self.style.SUCCESS(f'✔ {config.name} is valid'))
        else:
            self.stdout.write(self.style.ERROR(f'✘ {len(result.problems)} problem(s) in {config.name}'))
