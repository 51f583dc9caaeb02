"""
Experiment files.

An experiment is a TOML document with ``[environment]``, ``[algorithm]`` and
``[run]`` sections. ``load`` parses it, validates it through
``ExperimentSerializer`` and returns a frozen ``ExperimentConfig``; every
problem is reported as a ``ConfigError`` pointing at the line of the
offending key.
"""

import logging
import re

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field
from pathlib import Path

from rest_framework.exceptions import ErrorDetail

from .adv_agent import EpochState, default_tau, exploration_parameters, min_epochs_for_bound
from .env import AdversaryKind, AdversaryModel, RewardTable, UserSchedule, check_separability
from .exceptions import ConfigError
from .experiment import (
    ADVERSARIAL, DOUBLING, DYNAMIC_ADVERSARIAL, DYNAMIC_STOCHASTIC, STOCHASTIC, STOCHASTIC_FAMILY, ExperimentConfig,
)
from .serializers import ExperimentSerializer
from .stoch_agent import StochConfig, default_fixing_rounds, estimation_rounds, minimum_tau, user_count_rounds

logger = logging.getLogger(__name__)

PRESET_DIR = Path(__file__).resolve().parent / 'presets'

_TOML_POSITION = re.compile(r'at line (\d+)')


def locate(text, section, key=None):
    """1-based line of ``key = ...`` inside ``[section]`` (or of the header itself)."""
    current = None
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        header = re.fullmatch(r'\[\s*([\w.-]+)\s*\]', stripped)
        if header:
            current = header.group(1)
            if key is None and current == section:
                return number
            continue
        if current == section and key is not None and re.match(rf'{re.escape(key)}\s*=', stripped):
            return number
    return None


def flatten_errors(detail, path=()):
    """``(path, message)`` pairs from a DRF error structure."""
    if isinstance(detail, dict):
        for key, value in detail.items():
            yield from flatten_errors(value, path + (str(key),))
    elif isinstance(detail, list) and detail and not isinstance(detail[0], (str, ErrorDetail)):
        for value in detail:
            yield from flatten_errors(value, path)
    elif isinstance(detail, list):
        for message in detail:
            yield path, str(message)
    else:
        yield path, str(detail)


def _anchor(text, path):
    parts = [p for p in path if p not in ('non_field_errors',)]
    if not parts:
        return None
    section = parts[0]
    if len(parts) > 1:
        return locate(text, section, parts[1]) or locate(text, section)
    return locate(text, section)


def validation_error(text, detail):
    """One ``ConfigError`` listing every DRF error with its line."""
    lines, first = [], None
    for path, message in flatten_errors(detail):
        line = _anchor(text, path)
        first = first if first is not None else line
        where = f'line {line}: ' if line is not None else ''
        lines.append(f'{where}{".".join(p for p in path if p != "non_field_errors")}: {message}')
    error = ConfigError('\n'.join(lines))
    error.line = first
    return error


def parse_document(text):
    try:
        document = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        match = _TOML_POSITION.search(str(exc))
        raise ConfigError(f'malformed TOML: {exc}', line=int(match.group(1)) if match else None) from exc
    for section in ('environment', 'algorithm'):
        if section not in document:
            raise ConfigError(f'missing [{section}] section')
    document.setdefault('run', {})
    return document


def _fixing_bound(algo, scenario, K, M):
    """Tf every agent of a static run shares: the pinned value or the allowance for the configured users."""
    if 'Tf_bound' in algo:
        return algo['Tf_bound']
    if scenario == STOCHASTIC:
        return default_fixing_rounds(K, M, algo['delta'])
    return None


def parse(text, name='<config>', base_dir=None, strict=True):
    """
    Validate ``text`` and build an ``ExperimentConfig``. With ``strict`` off
    the reward table is kept even when it breaks its invariants (used to
    report on broken files).
    """
    document = parse_document(text)
    serializer = ExperimentSerializer(data=document)
    if not serializer.is_valid():
        raise validation_error(text, serializer.errors)
    data = serializer.validated_data
    env, algo, run = data['environment'], data['algorithm'], data['run']
    scenario, K, M = algo['scenario'], env['users'], env['M']

    table = adversary = stoch = None
    if scenario in STOCHASTIC_FAMILY:
        table = RewardTable(env['means'], env['variance'], env['dist_kind'])
        if strict:
            problems = table.problems()
            if problems:
                raise ConfigError('; '.join(problems), line=locate(text, 'environment', 'means'))
        stoch = StochConfig(
            M=M,
            beta=table.beta,
            T0=algo['T0'],
            Tx=algo['Tx'],
            N0=algo['N0'],
            Tc=algo.get('Tc'),
            Tf_bound=_fixing_bound(algo, scenario, K, M),
            epsilon=algo['epsilon'],
            delta=algo['delta'],
            restarts=algo['restarts'],
            max_iters=algo['max_iters'],
            known_parameters=algo['known_parameters'],
            estimation_snapshot_every=algo.get('estimation_snapshot_every'),
        )
    elif env['adversary'] == AdversaryKind.SCRIPTED.value:
        path = Path(env['rewards_csv'])
        if not path.is_absolute() and base_dir is not None:
            path = Path(base_dir) / path
        if not path.exists():
            raise ConfigError(f'reward tensor {path} not found', line=locate(text, 'environment', 'rewards_csv'))
        adversary = AdversaryModel.from_csv(path, M=M)
    else:
        adversary = AdversaryModel(M=M, floor_low=env['floor_low'], floor_high=env['floor_high'])

    horizon = run.get('horizon')
    if scenario == STOCHASTIC and horizon is None:
        horizon = stoch.schedule_length(K) + run['cycling_rounds']

    tau = algo.get('tau')
    if tau is None and scenario in (DOUBLING, DYNAMIC_ADVERSARIAL):
        tau = default_tau(M, M if scenario == DYNAMIC_ADVERSARIAL else K, algo['y'])
        logger.info('using default tau=%d', tau)

    config = ExperimentConfig(
        name=name,
        scenario=scenario,
        users=K,
        M=M,
        table=table,
        adversary=adversary,
        stoch=stoch,
        events=tuple(env.get('events', ())),
        arrival_zeta=env.get('arrival_zeta'),
        y=algo['y'],
        tau=tau,
        horizon=horizon,
        trials=run['trials'],
        seed=run['seed'],
        checkpoint_every=run.get('checkpoint_every'),
        separability_c=env['separability_c'],
        separability_epsilon2=env['separability_epsilon2'],
        text=text,
    )
    if strict and config.events:
        problems = UserSchedule(K, horizon, config.events).problems(config.user_limit)
        if problems:
            raise ConfigError('; '.join(problems), line=locate(text, 'environment', 'events'))
    if strict and scenario == DYNAMIC_STOCHASTIC:
        minimum = minimum_tau(stoch, config.user_limit)
        if tau < minimum:
            raise ConfigError(f'tau={tau} is below the minimum epoch length {minimum}',
                              line=locate(text, 'algorithm', 'tau'))
    if adversary is not None and adversary.horizon is not None and adversary.horizon < horizon:
        raise ConfigError(f'scripted rewards cover {adversary.horizon} rounds, horizon is {horizon}',
                          line=locate(text, 'run', 'horizon'))
    return config


def resolve(source, preset_dir=None):
    """Path of ``source``, which is a file or the name of a shipped preset."""
    path = Path(source)
    if path.is_file():
        return path
    preset = Path(preset_dir or PRESET_DIR) / f'{source}.toml'
    if preset.is_file():
        return preset
    raise ConfigError(f'no config file or preset named {source!r}')


def load(source, preset_dir=None, strict=True):
    path = resolve(source, preset_dir)
    return parse(path.read_text(encoding='utf-8'), name=path.stem, base_dir=path.parent, strict=strict)


# -- review --------------------------------------------------------------------

@dataclass
class Review:
    problems: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    separability: object = None
    info: dict = field(default_factory=dict)

    @property
    def ok(self):
        return not self.problems


def review(config):
    """Report-only checks of a parsed config (invariants, feasibility, guarantees)."""
    result = Review()
    if config.table is not None:
        result.problems.extend(config.table.problems())
        result.warnings.extend(config.table.support_warnings())
        if config.M >= 2:
            report = check_separability(
                config.table, config.users, config.separability_c, config.separability_epsilon2,
            )
            result.separability = report
            if not report.satisfied:
                result.warnings.append(
                    f'separability violated: gap {report.worst_gap:.4g} on channel {report.worst_pair[0]} '
                    f'(occupancies {report.worst_pair[1]} and {report.worst_pair[2]}) is below {report.threshold:.4g}'
                    if report.worst_pair else 'separability violated'
                )
    if config.stoch is not None:
        stoch = config.stoch
        result.info['T0'] = stoch.T0
        result.info['T0_for_user_count'] = user_count_rounds(config.users, config.M, stoch.delta)
        result.info['T0_for_estimates'] = estimation_rounds(
            config.users, config.M, stoch.beta, stoch.epsilon, stoch.delta,
        )
        if config.scenario == DYNAMIC_STOCHASTIC:
            minimum = minimum_tau(stoch, config.user_limit)
            result.info['minimum_tau'] = minimum
            if config.tau < minimum:
                result.problems.append(f'tau={config.tau} is below the minimum epoch length {minimum}')
    else:
        first_horizon = config.horizon if config.scenario == ADVERSARIAL else config.tau
        n = EpochState(T=first_horizon, y=config.y).n_epochs
        gamma, clamped = exploration_parameters(config.M, n)[2:]
        result.info['epochs'] = n
        result.info['gamma'] = gamma
        if clamped:
            result.warnings.append(
                f'gamma clamped to 1: {n} epochs is below {min_epochs_for_bound(config.M)} for M={config.M}'
            )
        if config.tau is not None:
            result.info['tau'] = config.tau
    if config.events:
        result.problems.extend(UserSchedule(config.users, config.horizon, config.events).problems(config.user_limit))
    return result
