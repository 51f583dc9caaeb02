"""
Regret benchmarks and diagnostics.

Stochastic regret is measured in expectation: every round is scored with
the (clamped-distribution) means of the channels users sat on, against the
best occupancy vector for the number of active users. Adversarial regret
is measured against the best fixed one-to-one assignment of users to
channels in hindsight, re-chosen on every interval where the set of active
users is constant.

Both come in two flavours: functions over a full ``Trace`` and observers
("folds") that reduce a running trial to checkpoint values without keeping
per-round data.
"""

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import optimize, stats

from .exceptions import ConfigError
from .stoch_agent import allocation_value, optimal_allocation

logger = logging.getLogger(__name__)

# permutation count above which the assignment problem goes to the solver
EXHAUSTIVE_LIMIT = 50_000


@dataclass
class RegretSeries:
    """Cumulative regret after ``t[i]`` rounds; ``instantaneous`` only for full traces."""

    t: np.ndarray
    cumulative: np.ndarray
    benchmark: str
    instantaneous: np.ndarray = None

    def frame(self):
        return pd.DataFrame({
            't': self.t,
            'inst': self.instantaneous if self.instantaneous is not None else np.nan,
            'cum': self.cumulative,
        })


def checkpoints(horizon, every=None):
    """Round counts at which cumulative values are reported; the horizon is always last."""
    every = every or max(1, math.ceil(horizon / 1000))
    points = list(range(every, horizon + 1, every))
    if not points or points[-1] != horizon:
        points.append(horizon)
    return np.array(points, dtype=int)


# -- stochastic --------------------------------------------------------------

class StochasticOracle:
    """True-table side of the stochastic metrics."""

    def __init__(self, table):
        self.table = table
        self.means = table.effective_means()
        self._optimal = {}

    def optimal(self, K):
        """``(f*, value)`` for ``K`` active users."""
        if K not in self._optimal:
            f_star = optimal_allocation(self.means, K)
            self._optimal[K] = f_star, allocation_value(self.means, f_star)
        return self._optimal[K]

    def system_reward(self, occupancy):
        """Expected system reward of occupancy row(s)."""
        occupancy = np.asarray(occupancy, dtype=int)
        width = max(int(occupancy.max(initial=0)), self.means.shape[1])
        padded = np.zeros((self.means.shape[0], width + 1))
        padded[:, 1:self.means.shape[1] + 1] = self.means
        channels = np.arange(self.means.shape[0])
        return (occupancy * padded[channels, occupancy]).sum(axis=-1)


def stochastic_regret(table, trace, realized=False):
    """Per-round and cumulative regret of a stochastic ``Trace``."""
    oracle = StochasticOracle(table)
    K_t = trace.active.sum(axis=1)
    best = np.array([oracle.optimal(int(k))[1] if k else 0.0 for k in K_t])
    got = trace.system_rewards() if realized else oracle.system_reward(trace.occupancy)
    inst = best - got
    return RegretSeries(
        t=np.arange(1, trace.horizon + 1),
        cumulative=np.cumsum(inst),
        benchmark='realized' if realized else 'expected',
        instantaneous=inst,
    )


# -- adversarial ---------------------------------------------------------------

def best_assignment(C):
    """
    Max-weight assignment of the rows of ``C`` (users) to distinct columns
    (channels). Returns ``(value, channels)``.
    """
    C = np.asarray(C, dtype=float)
    K, M = C.shape
    if K > M:
        raise ConfigError(f'cannot assign {K} users to {M} distinct channels')
    if K == 0:
        return 0.0, ()
    if K <= 8 and math.perm(M, K) <= EXHAUSTIVE_LIMIT:
        rows = np.arange(K)
        best_value, best = -np.inf, None
        for perm in itertools.permutations(range(M), K):
            value = C[rows, perm].sum()
            if value > best_value:
                best_value, best = value, perm
        return float(best_value), tuple(best)
    rows, cols = optimize.linear_sum_assignment(C, maximize=True)
    return float(C[rows, cols].sum()), tuple(int(c) for c in cols[np.argsort(rows)])


def adversarial_benchmark(gains, K=None, T=None):
    """Best fixed assignment value over rounds ``[0, T)`` of a ``T x K x M`` gain tensor."""
    gains = np.asarray(gains, dtype=float)
    T = gains.shape[0] if T is None else T
    K = gains.shape[1] if K is None else K
    return best_assignment(gains[:T, :K].sum(axis=0))[0]


def segmented_benchmark(gains, schedule, upto=None):
    """
    Sum over maximal constant-active-set intervals (up to round ``upto``)
    of the best assignment of that interval's users.
    """
    upto = schedule.horizon if upto is None else upto
    total = 0.0
    for start, end, users in schedule.segments():
        if start >= upto:
            break
        users = sorted(users)
        total += best_assignment(gains[start:min(end, upto)][:, users].sum(axis=0))[0]
    return total


def adversarial_regret(gains, trace, schedule=None, points=None):
    """Cumulative regret at ``points`` (default: every ceil(T/1000) rounds)."""
    gains = np.asarray(gains, dtype=float)
    points = checkpoints(trace.horizon) if points is None else np.asarray(points, dtype=int)
    realized = np.concatenate([[0.0], np.cumsum(trace.system_rewards())])
    if schedule is None:
        prefix = np.concatenate([np.zeros((1,) + gains.shape[1:]), np.cumsum(gains, axis=0)])
        bench = np.array([best_assignment(prefix[p])[0] for p in points])
    else:
        bench = np.array([segmented_benchmark(gains, schedule, p) for p in points])
    return RegretSeries(t=points, cumulative=bench - realized[points], benchmark='best-assignment')


# -- streaming folds -------------------------------------------------------------

class CheckpointFold:
    """Base observer recording cumulative values at ``points``."""

    def __init__(self, points):
        self.points = np.asarray(points, dtype=int)
        self._next = 0
        self.regret = np.zeros(self.points.size)
        self.collisions = np.zeros(self.points.size, dtype=int)
        self._collisions = 0

    def __call__(self, outcome):
        self.absorb(outcome)
        self._collisions += int(outcome.collided.sum())
        rounds = outcome.t + 1
        while self._next < self.points.size and self.points[self._next] == rounds:
            self.record(self._next)
            self._next += 1

    def record(self, i):
        self.regret[i] = self.current_regret()
        self.collisions[i] = self._collisions

    def absorb(self, outcome):
        raise NotImplementedError

    def current_regret(self):
        raise NotImplementedError

    def series(self, benchmark):
        return RegretSeries(t=self.points, cumulative=self.regret.copy(), benchmark=benchmark)


class StochasticRegretFold(CheckpointFold):
    def __init__(self, table, points):
        super().__init__(points)
        self.oracle = StochasticOracle(table)
        self.expected = 0.0
        self.realized = 0.0
        self.realized_regret = np.zeros(self.points.size)

    def absorb(self, outcome):
        best = self.oracle.optimal(len(outcome.users))[1]
        self.expected += best - float(self.oracle.system_reward(outcome.occupancy))
        self.realized += best - float(outcome.rewards.sum())

    def record(self, i):
        super().record(i)
        self.realized_regret[i] = self.realized

    def current_regret(self):
        return self.expected


class AdversarialRegretFold(CheckpointFold):
    """Tracks per-user cumulative gains and re-solves the assignment at checkpoints."""

    def __init__(self, n_slots, M, points):
        super().__init__(points)
        self.C = np.zeros((n_slots, M))
        self.reward = 0.0
        self.closed_value = 0.0
        self.segment_users = None
        self.segment_start = None

    def _segment_value(self):
        users = sorted(self.segment_users)
        return best_assignment((self.C - self.segment_start)[users])[0]

    def absorb(self, outcome):
        users = outcome.active
        if users != self.segment_users:
            if self.segment_users is not None:
                self.closed_value += self._segment_value()
            self.segment_users, self.segment_start = users, self.C.copy()
        self.C[outcome.users] += outcome.gains
        self.reward += float(outcome.rewards.sum())

    def current_regret(self):
        return self.closed_value + self._segment_value() - self.reward


# -- estimation diagnostics ----------------------------------------------------

def estimation_error_series(progress, K, table):
    """
    ``(round, |K_hat - K|, max |mu_hat - mu|)`` rows from an agent's estimation
    snapshots; the mean error covers the occupancies the agent estimated.
    """
    truth = table.effective_means()
    rows = []
    for snap in progress:
        mu_error = np.nan
        if snap.get('mu_hat') is not None:
            mu_hat = np.asarray(snap['mu_hat'], dtype=float)
            diff = np.abs(mu_hat - truth[:, :mu_hat.shape[1]])
            if np.isfinite(diff).any():
                mu_error = float(np.nanmax(diff))
        rows.append({'round': snap['round'], 'k_error': abs(snap['K_hat'] - K), 'mu_error': mu_error})
    return pd.DataFrame(rows, columns=['round', 'k_error', 'mu_error'])


# -- aggregation and fits ------------------------------------------------------

@dataclass
class ExponentReport:
    slope: float
    intercept: float
    r_squared: float
    t_start: int
    t_end: int
    points: int
    skipped: int
    ok: bool

    def as_dict(self):
        return {
            'slope': self.slope,
            'intercept': self.intercept,
            'r_squared': self.r_squared,
            't_start': self.t_start,
            't_end': self.t_end,
            'points': self.points,
            'skipped': self.skipped,
            'ok': self.ok,
        }


def growth_exponent(t, values, min_points=5):
    """Least-squares slope of log(values) against log(t) over the positive points."""
    t = np.asarray(t, dtype=float)
    values = np.asarray(values, dtype=float)
    keep = (values > 0) & (t > 0)
    skipped = int((~keep).sum())
    if skipped:
        logger.info('growth fit skips %d non-positive checkpoint(s)', skipped)
    if keep.sum() < min_points:
        return ExponentReport(math.nan, math.nan, math.nan, 0, 0, int(keep.sum()), skipped, False)
    fit = stats.linregress(np.log(t[keep]), np.log(values[keep]))
    return ExponentReport(
        slope=float(fit.slope),
        intercept=float(fit.intercept),
        r_squared=float(fit.rvalue ** 2),
        t_start=int(t[keep][0]),
        t_end=int(t[keep][-1]),
        points=int(keep.sum()),
        skipped=skipped,
        ok=True,
    )


def tail_slope(t, cumulative, fraction=0.5):
    """Linear slope of cumulative regret over the last ``fraction`` of the horizon."""
    t = np.asarray(t, dtype=float)
    keep = t >= t[-1] * (1 - fraction)
    return float(stats.linregress(t[keep], np.asarray(cumulative, dtype=float)[keep]).slope)


def aggregate(t, series):
    """Per-checkpoint mean and standard error across trials (rows of ``series``)."""
    series = np.atleast_2d(np.asarray(series, dtype=float))
    n = series.shape[0]
    mean = series.mean(axis=0)
    stderr = series.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(mean)
    return pd.DataFrame({'t': np.asarray(t, dtype=int), 'mean_cum_regret': mean, 'stderr': stderr})
