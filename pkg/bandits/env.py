"""
Reward-generating environments.

* ``RewardTable`` / ``stochastic_round``: occupancy-dependent rewards shared
  by all users of a channel.
* ``AdversaryModel`` / ``adversarial_round``: user-dependent rewards, zero
  on collision.
* ``UserSchedule``: which users are active at each round.
* ``check_separability``: the gap condition the clustering step relies on.

Environments are immutable; every round is a pure function of the round
inputs and the random stream passed in.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import pandas as pd
from scipy import stats

from .exceptions import AdversaryExhaustedError, ConfigError, ContractViolation

logger = logging.getLogger(__name__)

# Mean rewards of the six-channel stochastic experiment, occupancies 1..4.
REFERENCE_MEANS = np.array([
    [1.00, 0.49, 0.100, 0.005],
    [0.98, 0.42, 0.130, 0.002],
    [0.97, 0.50, 0.120, 0.009],
    [1.00, 0.48, 0.009, 0.008],
    [0.92, 0.43, 0.100, 0.001],
    [0.90, 0.44, 0.100, 0.001],
])


class DistKind(str, Enum):
    UNIFORM = 'uniform'
    TRUNCATED_GAUSSIAN = 'truncated-gaussian'


def occupancy(actions, M):
    """Per-channel user counts f_t for one round."""
    return np.bincount(np.asarray(actions, dtype=int), minlength=M)


def _check_actions(actions, M):
    actions = np.asarray(actions, dtype=int)
    if actions.ndim != 1:
        raise ContractViolation('actions must be a flat sequence of channel indices')
    bad = actions[(actions < 0) | (actions >= M)]
    if bad.size:
        raise ContractViolation(f'channel(s) {sorted(set(bad.tolist()))} outside [0, {M})')
    return actions


@dataclass(frozen=True, eq=False)
class RewardTable:
    """
    Mean reward per (channel, occupancy).

    ``means[m][n]`` is the mean reward of a user on channel ``m`` shared by
    ``n + 1`` users, for occupancies ``1..beta+1``; larger occupancies pay 0.
    """

    means: np.ndarray
    variance: float = 0.0
    dist_kind: DistKind = DistKind.UNIFORM
    _effective: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        means = np.array(self.means, dtype=float)
        if means.ndim != 2 or means.shape[0] < 1 or means.shape[1] < 2:
            raise ConfigError('means must be an M x (beta+1) matrix with beta >= 1')
        if self.variance < 0:
            raise ConfigError(f'variance must be non-negative, got {self.variance}')
        means.setflags(write=False)
        object.__setattr__(self, 'means', means)
        object.__setattr__(self, 'variance', float(self.variance))
        object.__setattr__(self, 'dist_kind', DistKind(self.dist_kind))
        effective = _clamped_mean(means, self.variance, self.dist_kind)
        effective.setflags(write=False)
        object.__setattr__(self, '_effective', effective)

    @property
    def M(self):
        return self.means.shape[0]

    @property
    def beta(self):
        return self.means.shape[1] - 1

    @property
    def half_width(self):
        return math.sqrt(3.0 * self.variance)

    def mean(self, m, n):
        """Nominal mean on channel ``m`` with ``n >= 1`` occupants."""
        if n < 1:
            raise ContractViolation(f'occupancy must be >= 1, got {n}')
        return float(self.means[m, n - 1]) if n <= self.beta + 1 else 0.0

    def expected(self, m, n):
        """Mean of the reward actually emitted (after clamping to [0, 1])."""
        if n < 1:
            raise ContractViolation(f'occupancy must be >= 1, got {n}')
        return float(self._effective[m, n - 1]) if n <= self.beta + 1 else 0.0

    def effective_means(self):
        return self._effective

    def mean_matrix(self, occupancies, effective=True):
        """``M x occupancies`` matrix of means, zero-extended past beta+1."""
        source = self._effective if effective else self.means
        out = np.zeros((self.M, occupancies))
        width = min(occupancies, source.shape[1])
        out[:, :width] = source[:, :width]
        return out

    def problems(self):
        """Violations of the table invariants, as readable strings."""
        found = []
        if np.any(self.means < 0) or np.any(self.means > 1):
            found.append('every mean must lie in [0, 1]')
        for m, row in enumerate(self.means):
            if np.any(np.diff(row) >= 0):
                found.append(f'channel {m}: means must be strictly decreasing in occupancy')
        return found

    def support_warnings(self):
        """Cells whose reward support leaves [0, 1] and is therefore clamped."""
        if self.variance == 0:
            return []
        spread = self.half_width if self.dist_kind is DistKind.UNIFORM else 3 * math.sqrt(self.variance)
        cells = np.argwhere((self.means - spread < 0) | (self.means + spread > 1))
        return [
            f'channel {m}, occupancy {n + 1}: support of mean {self.means[m, n]:g} is clamped '
            f'to [0, 1] (emitted mean {self._effective[m, n]:.4f})'
            for m, n in cells
        ]

    def validate(self):
        problems = self.problems()
        if problems:
            raise ConfigError('; '.join(problems))
        for warning in self.support_warnings():
            logger.warning(warning)

    def draw(self, mean_values, rng):
        """One reward per entry of ``mean_values``, clamped to [0, 1]."""
        mean_values = np.asarray(mean_values, dtype=float)
        if self.dist_kind is DistKind.UNIFORM:
            w = self.half_width
            draws = rng.uniform(mean_values - w, mean_values + w)
        else:
            draws = rng.normal(mean_values, math.sqrt(self.variance))
        return np.clip(draws, 0.0, 1.0)


def _clamped_mean(means, variance, dist_kind):
    if variance == 0:
        return np.clip(means, 0.0, 1.0)
    if dist_kind is DistKind.UNIFORM:
        w = math.sqrt(3.0 * variance)
        a, b = means - w, means + w
        lo, hi = np.clip(a, 0.0, 1.0), np.clip(b, 0.0, 1.0)
        inside = (hi ** 2 - lo ** 2) / 2.0
        above = np.maximum(b - np.maximum(a, 1.0), 0.0)
        return (inside + above) / (b - a)
    sd = math.sqrt(variance)
    alpha, beta = (0.0 - means) / sd, (1.0 - means) / sd
    cdf_a, cdf_b = stats.norm.cdf(alpha), stats.norm.cdf(beta)
    return means * (cdf_b - cdf_a) + sd * (stats.norm.pdf(alpha) - stats.norm.pdf(beta)) + (1.0 - cdf_b)


@dataclass(frozen=True)
class RoundFeedback:
    rewards: np.ndarray
    collided: np.ndarray
    occupancy: np.ndarray
    # adversarial rounds only: the full gain row of every acting user
    gains: np.ndarray = None


def stochastic_round(table, actions, rng):
    """Rewards and collision flags when ``actions[k]`` is user k's channel."""
    actions = _check_actions(actions, table.M)
    f = occupancy(actions, table.M)
    n = f[actions]
    meaningful = n <= table.beta + 1
    column = np.minimum(n, table.beta + 1) - 1
    rewards = table.draw(table.means[actions, column], rng)
    rewards[~meaningful] = 0.0
    return RoundFeedback(rewards=rewards, collided=n > 1, occupancy=f)


@dataclass(frozen=True)
class SeparabilityReport:
    satisfied: bool
    worst_pair: tuple
    worst_gap: float
    threshold: float
    c: float
    epsilon2: float

    def as_dict(self):
        return {
            'satisfied': self.satisfied,
            'worst_pair': list(self.worst_pair) if self.worst_pair else None,
            'worst_gap': self.worst_gap,
            'threshold': self.threshold,
            'c': self.c,
            'epsilon2': self.epsilon2,
        }


def separability_threshold(M, K, variance, c, epsilon2):
    return 4.0 * M * c * math.exp((K - 1) / (M - 1)) * math.sqrt(variance + epsilon2)


def check_separability(table, K, c=16.0, epsilon2=0.01):
    """Smallest gap between the means of two occupancies (<= beta) of a channel."""
    if table.M < 2:
        raise ConfigError('the separability condition needs at least two channels')
    threshold = separability_threshold(table.M, K, table.variance, c, epsilon2)
    worst_gap, worst_pair = math.inf, None
    for m in range(table.M):
        for r in range(1, table.beta + 1):
            for s in range(r + 1, table.beta + 1):
                gap = abs(table.means[m, r - 1] - table.means[m, s - 1])
                if gap < worst_gap:
                    worst_gap, worst_pair = float(gap), (m, r, s)
    return SeparabilityReport(
        satisfied=worst_gap >= threshold,
        worst_pair=worst_pair,
        worst_gap=worst_gap,
        threshold=threshold,
        c=c,
        epsilon2=epsilon2,
    )


class AdversaryKind(str, Enum):
    IID_UNIFORM_FLOOR = 'iid-uniform-randomized-floor'
    SCRIPTED = 'scripted'


@dataclass(frozen=True, eq=False)
class AdversaryModel:
    """
    Oblivious reward source of the adversarial setting.

    ``iid-uniform-randomized-floor``: every round, each channel draws a floor
    ``a ~ U[floor_low, floor_high]`` and each user's reward on it is
    ``U[a, 1]``. ``scripted``: rewards are read from ``tensor[t][k][m]``.
    """

    M: int
    kind: AdversaryKind = AdversaryKind.IID_UNIFORM_FLOOR
    floor_low: float = 0.2
    floor_high: float = 1.0
    tensor: np.ndarray = None

    def __post_init__(self):
        object.__setattr__(self, 'kind', AdversaryKind(self.kind))
        if self.M < 1:
            raise ConfigError(f'M must be >= 1, got {self.M}')
        if self.kind is AdversaryKind.SCRIPTED:
            if self.tensor is None:
                raise ConfigError('a scripted adversary needs a reward tensor')
            tensor = np.array(self.tensor, dtype=float)
            if tensor.ndim != 3 or tensor.shape[2] != self.M:
                raise ConfigError(f'reward tensor must have shape T x K x {self.M}')
            if np.any(tensor < 0) or np.any(tensor > 1):
                raise ConfigError('scripted rewards must lie in [0, 1]')
            tensor.setflags(write=False)
            object.__setattr__(self, 'tensor', tensor)
        elif not 0 <= self.floor_low <= self.floor_high <= 1:
            raise ConfigError('floor range must satisfy 0 <= low <= high <= 1')

    @classmethod
    def from_csv(cls, path, M=None):
        """Scripted adversary from a ``t,k,m,reward`` CSV file."""
        frame = pd.read_csv(path)
        missing = {'t', 'k', 'm', 'reward'} - set(frame.columns)
        if missing:
            raise ConfigError(f'{path}: missing column(s) {sorted(missing)}')
        T, K = int(frame.t.max()) + 1, int(frame.k.max()) + 1
        M = M or int(frame.m.max()) + 1
        tensor = np.zeros((T, K, M))
        tensor[frame.t.to_numpy(int), frame.k.to_numpy(int), frame.m.to_numpy(int)] = frame.reward.to_numpy(float)
        return cls(M=M, kind=AdversaryKind.SCRIPTED, tensor=tensor)

    @property
    def horizon(self):
        return None if self.tensor is None else self.tensor.shape[0]

    def draw(self, t, n_users, rng):
        """Gain matrix ``g[k][m]`` of round ``t`` for user slots ``0..n_users-1``."""
        if self.kind is AdversaryKind.SCRIPTED:
            if t >= self.tensor.shape[0]:
                raise AdversaryExhaustedError(f'scripted rewards end at round {self.tensor.shape[0]}')
            if n_users > self.tensor.shape[1]:
                raise ContractViolation(f'scripted rewards cover {self.tensor.shape[1]} users, {n_users} requested')
            return np.array(self.tensor[t, :n_users])
        floor = rng.uniform(self.floor_low, self.floor_high, size=self.M)
        return rng.uniform(floor, 1.0, size=(n_users, self.M))


def adversarial_round(adv, t, actions, rng, users=None, n_slots=None):
    """
    User k gets ``g[t][k][a_k]`` when alone on its channel, 0 otherwise.

    ``users`` are the ids of the acting users (default ``0..len(actions)-1``);
    ``n_slots`` fixes how many user rows the adversary draws per round.
    """
    actions = _check_actions(actions, adv.M)
    users = np.arange(len(actions)) if users is None else np.asarray(users, dtype=int)
    if len(actions) > adv.M:
        raise ContractViolation(f'{len(actions)} active users exceed {adv.M} channels')
    if n_slots is None:
        n_slots = int(users.max()) + 1 if users.size else 0
    gains = adv.draw(t, n_slots, rng)[users]
    f = occupancy(actions, adv.M)
    collided = f[actions] > 1
    rewards = np.where(collided, 0.0, gains[np.arange(len(actions)), actions])
    return RoundFeedback(rewards=rewards, collided=collided, occupancy=f, gains=gains)


class EventKind(str, Enum):
    JOIN = 'join'
    LEAVE = 'leave'


@dataclass(frozen=True)
class UserEvent:
    time: int
    kind: EventKind
    user: int

    def __post_init__(self):
        object.__setattr__(self, 'kind', EventKind(self.kind))


@dataclass(frozen=True, eq=False)
class UserSchedule:
    """
    Active users over ``[0, horizon)``: users ``0..initial_users-1`` from
    round 0, then joins and leaves taking effect at the round they carry.
    Within a round, leaves are applied before joins.
    """

    initial_users: int
    horizon: int
    events: tuple = ()
    _by_time: dict = field(init=False, repr=False)

    def __post_init__(self):
        events = tuple(sorted(
            (e if isinstance(e, UserEvent) else UserEvent(*e) for e in self.events),
            key=lambda e: (e.time, e.kind is EventKind.JOIN, e.user),
        ))
        object.__setattr__(self, 'events', events)
        by_time = {}
        for event in events:
            by_time.setdefault(event.time, []).append(event)
        object.__setattr__(self, '_by_time', by_time)

    @classmethod
    def static(cls, users, horizon):
        return cls(initial_users=users, horizon=horizon)

    def events_at(self, t):
        return self._by_time.get(t, [])

    def active_users(self, t):
        active = set(range(self.initial_users))
        for event in self.events:
            if event.time > t:
                break
            if event.kind is EventKind.JOIN:
                active.add(event.user)
            else:
                active.discard(event.user)
        return frozenset(active)

    def user_ids(self):
        ids = set(range(self.initial_users))
        ids.update(e.user for e in self.events if e.kind is EventKind.JOIN)
        return sorted(ids)

    @property
    def n_slots(self):
        ids = self.user_ids()
        return ids[-1] + 1 if ids else 0

    @property
    def joins(self):
        return sum(e.kind is EventKind.JOIN for e in self.events)

    def segments(self):
        """Maximal ``(start, end, active_set)`` intervals with a constant active set."""
        bounds = sorted({0, self.horizon} | {e.time for e in self.events if 0 < e.time < self.horizon})
        return [(s, e, self.active_users(s)) for s, e in zip(bounds, bounds[1:])]

    def max_active(self):
        return max(len(active) for _, _, active in self.segments()) if self.horizon > 0 else self.initial_users

    def problems(self, limit):
        """Invariant violations; ``limit`` is beta*M (stochastic) or M (adversarial)."""
        found = []
        if self.initial_users < 1:
            found.append('at least one user must be active at t=0')
        active = set(range(self.initial_users))
        seen = set(active)
        for event in self.events:
            if not 0 < event.time <= self.horizon:
                found.append(
                    f'event {event.kind.value} of user {event.user} at t={event.time} outside (0, {self.horizon}]'
                )
            if event.kind is EventKind.JOIN:
                if event.user in seen:
                    found.append(f'user {event.user} joins twice')
                active.add(event.user)
                seen.add(event.user)
            else:
                if event.user not in active:
                    found.append(f'user {event.user} leaves at t={event.time} without being active')
                active.discard(event.user)
        for start, _, users in self.segments():
            if not 1 <= len(users) <= limit:
                found.append(f'{len(users)} active users at t={start}, allowed 1..{limit}')
        return found

    def validate(self, limit):
        problems = self.problems(limit)
        if problems:
            raise ConfigError('; '.join(problems))


def arrival_schedule(initial_users, horizon, zeta, limit, rng):
    """
    Schedule with ``floor(horizon ** zeta)`` joins at distinct random rounds.

    When a join would push the active count past ``limit``, the longest
    active user leaves in the same round.
    """
    n_joins = int(math.floor(horizon ** zeta))
    if n_joins >= horizon:
        raise ConfigError(f'{n_joins} joins do not fit in a horizon of {horizon}')
    times = np.sort(rng.choice(np.arange(1, horizon), size=n_joins, replace=False))
    active = list(range(initial_users))
    events, next_user = [], initial_users
    for t in times.tolist():
        if len(active) >= limit:
            events.append(UserEvent(t, EventKind.LEAVE, active.pop(0)))
        events.append(UserEvent(t, EventKind.JOIN, next_user))
        active.append(next_user)
        next_user += 1
    return UserSchedule(initial_users=initial_users, horizon=horizon, events=tuple(events))
