"""Figures of a batch (``run_experiment --plot``)."""

import logging
from pathlib import Path

import matplotlib

matplotlib.use('Agg')

import matplotlib.pyplot as plt  # noqa: E402

logger = logging.getLogger(__name__)

REGRET_PNG = 'regret.png'
ESTIMATION_PNG = 'estimation.png'


def plot_regret(frame, title, path):
    fig, ax = plt.subplots(1, 1, figsize=(8, 4.5))
    t = frame['t'].to_numpy()
    mean = frame['mean_cum_regret'].to_numpy()
    stderr = frame['stderr'].to_numpy()
    ax.plot(t, mean, label='mean cumulative regret')
    ax.fill_between(t, mean - stderr, mean + stderr, alpha=0.3, label='± 1 stderr')
    ax.set_xlabel('round')
    ax.set_ylabel('cumulative regret')
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_estimation(frame, title, path):
    by_round = frame.groupby('round')[['k_error', 'mu_error']].mean()
    fig, (ax_k, ax_mu) = plt.subplots(1, 2, figsize=(10, 4))
    ax_k.plot(by_round.index, by_round['k_error'])
    ax_k.set_xlabel('estimation round')
    ax_k.set_ylabel('mean |K_hat - K|')
    ax_mu.plot(by_round.index, by_round['mu_error'])
    ax_mu.set_xlabel('estimation round')
    ax_mu.set_ylabel('mean max |mu_hat - mu|')
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_batch(batch, out_dir):
    """Write the figures of ``batch`` into ``out_dir``; returns their paths."""
    out = Path(out_dir)
    config = batch.config
    title = f'{config.name} ({config.scenario}, {len(batch.trials)} trials)'
    paths = [plot_regret(batch.aggregate(), title, out / REGRET_PNG)]
    estimation = batch.estimation()
    if estimation is not None and not estimation.empty:
        paths.append(plot_estimation(estimation, title, out / ESTIMATION_PNG))
    logger.debug('plotted %d figure(s)', len(paths))
    return paths
