"""
Trial and batch runners.

``run_trial`` plays one scenario of an ``ExperimentConfig`` from its own
random substreams and reduces it online to checkpoint values (cumulative
regret, collisions, agent snapshots). ``run_batch`` runs many trials,
optionally across processes, and aggregates them in trial order.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np
import pandas as pd

from . import adv_agent, metrics, stoch_agent
from .env import UserSchedule
from .experiment import ADVERSARIAL, DOUBLING, DYNAMIC_STOCHASTIC, STOCHASTIC
from .loop import AgentSnapshots
from .rng import TrialStreams

logger = logging.getLogger(__name__)


@dataclass
class Trial:
    index: int
    seed: int
    scenario: str
    points: np.ndarray
    regret: np.ndarray
    collisions: np.ndarray
    realized_regret: np.ndarray = None
    joins: int = 0
    snapshots: list = field(default_factory=list)
    estimation: pd.DataFrame = None
    exp3p: list = field(default_factory=list)
    rows: pd.DataFrame = None
    series: metrics.RegretSeries = None
    cycling_regret: float = None


def trial_schedule(config, streams):
    if config.dynamic:
        return config.schedule(streams.schedule())
    return UserSchedule.static(config.users, config.horizon)


def _play(config, schedule, streams, observers, keep_trace):
    K, M = config.users, config.M
    if config.scenario == STOCHASTIC:
        return stoch_agent.run_stochastic(config.stoch, config.table, K, config.horizon, streams, observers, keep_trace)
    if config.scenario == DYNAMIC_STOCHASTIC:
        return stoch_agent.dynamic_stochastic(
            config.stoch, schedule, config.table, config.tau, streams, observers=observers, keep_trace=keep_trace,
        )
    if config.scenario == ADVERSARIAL:
        return adv_agent.run_multiuser(
            config.horizon, K, M, config.adversary, streams, config.y, observers, keep_trace, record_snapshots=True,
        )
    if config.scenario == DOUBLING:
        return adv_agent.run_doubling(
            config.tau, K, M, config.adversary, config.horizon, streams, config.y, observers, keep_trace,
            record_snapshots=True,
        )
    return adv_agent.run_dynamic_adv(
        config.tau, schedule, M, config.adversary, streams, config.y, observers, keep_trace, record_snapshots=True,
    )


def _round_rows(trial, trace, series):
    """Per-round, per-active-user rows of a recorded trace."""
    steps, slots = np.nonzero(trace.active)
    # the adversarial benchmark is only solved at checkpoints
    cum = np.full(trace.horizon, np.nan)
    cum[series.t - 1] = series.cumulative
    return pd.DataFrame({
        'trial': trial,
        't': steps,
        'user': slots,
        'action': trace.actions[steps, slots],
        'reward': trace.rewards[steps, slots],
        'collided': trace.collided[steps, slots].astype(int),
        'cum_regret_system': cum[steps],
    })


def _estimation_frame(config, agents):
    frames = []
    for user, agent in sorted(agents.items()):
        progress = getattr(agent, 'progress', None)
        if progress:
            frame = metrics.estimation_error_series(progress, config.users, config.table)
            frame.insert(0, 'user', user)
            frames.append(frame)
    return pd.concat(frames, ignore_index=True) if frames else None


def run_trial(config, trial=0, root_seed=None, per_round=False):
    """Play trial ``trial`` of ``config``; identical inputs give identical results."""
    seed = config.seed if root_seed is None else root_seed
    streams = TrialStreams(seed, trial)
    schedule = trial_schedule(config, streams)
    points = metrics.checkpoints(config.horizon, config.checkpoint_every)
    if config.stochastic:
        fold = metrics.StochasticRegretFold(config.table, points)
    else:
        fold = metrics.AdversarialRegretFold(schedule.n_slots, config.M, points)
    snapshots = AgentSnapshots(points)
    logger.debug('trial %d of %s (%s, T=%d) started', trial, config.name, config.scenario, config.horizon)
    run = _play(config, schedule, streams, [fold, snapshots], per_round)
    logger.debug('trial %d finished with regret %.4g', trial, fold.regret[-1])

    result = Trial(
        index=trial,
        seed=seed,
        scenario=config.scenario,
        points=points,
        regret=fold.regret,
        collisions=fold.collisions,
        realized_regret=getattr(fold, 'realized_regret', None),
        joins=schedule.joins,
        snapshots=snapshots.rows,
    )
    if config.scenario == STOCHASTIC:
        result.estimation = _estimation_frame(config, run.agents)
        _log_allocation(run.agents)
        result.cycling_regret = cycling_regret(config, fold)
    elif not config.stochastic:
        result.exp3p = adv_agent.snapshot_rows(run.agents)
    if per_round:
        if config.stochastic:
            result.series = metrics.stochastic_regret(config.table, run.trace)
        else:
            result.series = fold.series('best-assignment')
        result.rows = _round_rows(trial, run.trace, result.series)
    return result


def _log_allocation(agents):
    unfixed = sum(agent.state.unfixed_epochs for agent in agents.values())
    overfilled = sum(agent.state.overfilled_epochs for agent in agents.values())
    if unfixed:
        logger.warning('%d fixing epoch(s) ended without a fix', unfixed)
    if overfilled:
        logger.info('%d fixing epoch(s) settled one user over f*', overfilled)


def cycling_regret(config, fold):
    """
    Expected regret accrued between the first checkpoint of the cycling
    phase and the last one; 0 when every cycling slot realises f*. None if
    fewer than two checkpoints fall in the cycling phase.
    """
    start = config.stoch.schedule_length(config.users)
    after = fold.points >= start
    if after.sum() < 2:
        return None
    residual = float(fold.regret[after][-1] - fold.regret[after][0])
    span = int(fold.points[after][-1] - fold.points[after][0])
    if residual > 1e-9:
        logger.info('residual cycling regret %.4g over %d rounds', residual, span)
    return residual


@dataclass
class Batch:
    config: object
    trials: list

    @property
    def points(self):
        return self.trials[0].points

    def aggregate(self):
        return metrics.aggregate(self.points, [trial.regret for trial in self.trials])

    def mean_regret(self):
        return np.mean([trial.regret for trial in self.trials], axis=0)

    def exponent(self, start_fraction=0.1):
        """Growth exponent of mean cumulative regret over checkpoints from ``start_fraction * T``."""
        keep = self.points >= start_fraction * self.points[-1]
        return metrics.growth_exponent(self.points[keep], self.mean_regret()[keep])

    def estimation(self):
        frames = []
        for trial in self.trials:
            if trial.estimation is not None:
                frames.append(trial.estimation.assign(trial=trial.index))
        if not frames:
            return None
        frame = pd.concat(frames, ignore_index=True)
        return frame[['trial', 'user', 'round', 'k_error', 'mu_error']]


def run_batch(config, trials=None, root_seed=None, parallelism=1, per_round=False):
    """
    Run ``trials`` independent trials. Results come back in trial order, so
    sequential and parallel execution aggregate to the same values.
    """
    trials = config.trials if trials is None else trials
    root_seed = config.seed if root_seed is None else root_seed
    job = partial(run_trial, config, root_seed=root_seed, per_round=per_round)
    if parallelism > 1 and trials > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(job, range(trials)))
    else:
        results = [job(trial) for trial in range(trials)]
    logger.info('%s: %d trial(s) finished', config.name, trials)
    residual = [t.cycling_regret for t in results if t.cycling_regret is not None and t.cycling_regret > 1e-9]
    if residual:
        logger.warning('%s: %d of %d trial(s) accrued regret while cycling (mean %.4g)',
                       config.name, len(residual), trials, float(np.mean(residual)))
    return Batch(config=config, trials=results)
