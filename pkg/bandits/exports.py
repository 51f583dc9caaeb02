"""
Result files of a batch.

Everything written here is a pure function of (config text, seed, trial
count, flags), so re-running an experiment reproduces the files byte for
byte. CSVs are UTF-8 with a header row; JSON is written with sorted keys.
"""

import json
import logging
from pathlib import Path

import pandas as pd

from . import __version__

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.10g'

AGGREGATE = 'aggregate.csv'
TRIALS = 'trials.csv'
TRACE = 'trace.csv'
REGRET = 'regret.csv'
ESTIMATION = 'estimation.csv'
EXP3P = 'exp3p_snapshots.csv'
SNAPSHOTS = 'agent_snapshots.csv'
EXPONENT = 'exponent.json'
MANIFEST = 'manifest.json'


def write_csv(frame, path):
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, encoding='utf-8', lineterminator='\n')
    return path


def write_json(data, path):
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + '\n', encoding='utf-8')
    return path


def trials_frame(batch):
    frames = []
    for trial in batch.trials:
        frame = pd.DataFrame({
            'trial': trial.index,
            't': trial.points,
            'cum_regret': trial.regret,
            'collisions': trial.collisions,
        })
        if trial.realized_regret is not None:
            frame['cum_regret_realized'] = trial.realized_regret
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)


def snapshots_frame(batch):
    rows = []
    for trial in batch.trials:
        for snap in trial.snapshots:
            state = {k: v for k, v in snap.items() if k not in ('t', 'user')}
            rows.append({
                'trial': trial.index,
                't': snap['t'],
                'user': snap['user'],
                'state': json.dumps(state, sort_keys=True, default=str),
            })
    return pd.DataFrame(rows, columns=['trial', 't', 'user', 'state'])


def exp3p_frame(batch):
    rows = [{'trial': trial.index, **row} for trial in batch.trials for row in trial.exp3p]
    return pd.DataFrame(rows, columns=['trial', 'user', 'period', 'epoch', 'arm', 'p', 'G_tilde'])


def manifest(config, seed, trials, per_trial, per_round, outputs):
    return {
        'name': config.name,
        'scenario': config.scenario,
        'config_text': config.text,
        'config_sha256': config.sha256,
        'seed': seed,
        'trials': trials,
        'per_trial': per_trial,
        'per_round': per_round,
        'version': __version__,
        'outputs': sorted(outputs),
    }


def write_batch(batch, out_dir, seed, per_trial=False, per_round=False, plot=False):
    """Write the result files of ``batch`` into ``out_dir``; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config = batch.config
    written = [write_csv(batch.aggregate(), out / AGGREGATE)]

    estimation = batch.estimation()
    if estimation is not None:
        written.append(write_csv(estimation, out / ESTIMATION))
    if not config.stochastic:
        written.append(write_json(batch.exponent().as_dict(), out / EXPONENT))
    if per_trial:
        written.append(write_csv(trials_frame(batch), out / TRIALS))
        written.append(write_csv(snapshots_frame(batch), out / SNAPSHOTS))
        if not config.stochastic:
            written.append(write_csv(exp3p_frame(batch), out / EXP3P))
    if per_round:
        rows = pd.concat([trial.rows for trial in batch.trials], ignore_index=True)
        written.append(write_csv(rows, out / TRACE))
        series = pd.concat(
            [trial.series.frame().assign(trial=trial.index) for trial in batch.trials], ignore_index=True,
        )
        written.append(write_csv(series[['trial', 't', 'inst', 'cum']], out / REGRET))
    if plot:
        from .plots import plot_batch

        written.extend(plot_batch(batch, out))

    names = [path.name for path in written] + [MANIFEST]
    written.append(write_json(manifest(config, seed, len(batch.trials), per_trial, per_round, names), out / MANIFEST))
    logger.info('wrote %d file(s) to %s', len(written), out)
    return written


def read_manifest(path):
    return json.loads(Path(path).read_text(encoding='utf-8'))
