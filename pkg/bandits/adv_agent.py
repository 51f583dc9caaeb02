"""
The adversarial-setting user.

Each user runs an Exp3.P learner whose decisions last a whole epoch. An
epoch starts with collision resolution: the user samples channels from its
Exp3.P distribution until it is alone on one, then holds that channel to
the end of the epoch and feeds the learner the average reward it collected
while holding it. Wrappers restart the scheme over doubling periods when the
horizon is unknown, and let users come and go.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .base import ChannelAgent
from .env import UserSchedule, adversarial_round
from .exceptions import ConfigError, ContractViolation
from .loop import drive

logger = logging.getLogger(__name__)


def exploration_parameters(M, n):
    """``(phi, eta, gamma, clamped)`` for ``n`` decisions over ``M`` arms."""
    if M < 2:
        raise ConfigError(f'Exp3.P needs at least 2 arms, got {M}')
    if n < 1:
        raise ConfigError(f'Exp3.P needs at least one decision, got n={n}')
    base = math.sqrt(math.log(M) / (M * n))
    gamma = 1.05 * math.sqrt(M * math.log(M) / n)
    return base, 0.95 * base, min(gamma, 1.0), gamma > 1.0


def min_epochs_for_bound(M):
    """Fewest decisions for which gamma needs no clamping."""
    return math.ceil(1.1025 * M * math.log(M))


def h(M):
    return 5.15 * math.sqrt(M * math.log(M)) + math.sqrt(M / math.log(M))


def h_prime(M, K):
    return K * (h(M) + K * M ** K / math.sqrt(M * math.log(M)))


def single_user_regret_bound(n, M, alpha=1.0):
    return alpha * math.sqrt(n) * h(M)


def multiuser_regret_bound(T, M, K):
    return T ** 0.75 * h_prime(M, K)


def doubling_regret_bound(T, tau, M, K):
    return h_prime(M, K) * (2 * (T + tau)) ** 0.75 / (2 ** 0.75 - 1)


def dynamic_regret_bound(T, tau, M, kappa):
    return doubling_regret_bound(T, tau, M, M) + M * kappa * math.sqrt(tau + T)


# -- Exp3.P ------------------------------------------------------------------

@dataclass
class Exp3PState:
    M: int
    n: int
    phi: float
    eta: float
    gamma: float
    p: np.ndarray
    G_tilde: np.ndarray
    updates: int = 0

    @classmethod
    def from_horizon(cls, M, n):
        phi, eta, gamma, clamped = exploration_parameters(M, n)
        if clamped:
            logger.warning('gamma clamped to 1 for M=%d, n=%d (needs n >= %d)', M, n, min_epochs_for_bound(M))
        return cls(M=M, n=n, phi=phi, eta=eta, gamma=gamma, p=np.full(M, 1.0 / M), G_tilde=np.zeros(M))


def exp3p_probabilities(G_tilde, eta, gamma):
    """Exponential weights mixed with the uniform distribution."""
    z = eta * (G_tilde - G_tilde.max())
    weights = np.exp(z)
    return (1.0 - gamma) * weights / weights.sum() + gamma / G_tilde.size


def exp3p_sample(state, rng):
    return int(rng.choice(state.M, p=state.p))


def exp3p_update(state, arm, gain):
    """Credit normalised reward ``gain`` to ``arm`` plus the phi bonus to every arm."""
    if not 0.0 <= gain <= 1.0:
        raise ContractViolation(f'normalised reward {gain} outside [0, 1]')
    if not 0 <= arm < state.M:
        raise ContractViolation(f'arm {arm} outside [0, {state.M})')
    credit = np.full(state.M, state.phi)
    credit[arm] += gain
    state.G_tilde += credit / state.p
    state.p = exp3p_probabilities(state.G_tilde, state.eta, state.gamma)
    state.updates += 1
    return state


@dataclass
class Exp3PRun:
    arms: np.ndarray
    rewards: np.ndarray
    state: Exp3PState


def run_modified_exp3p(state, decision_times, gains_oracle, rng, horizon):
    """
    Single learner deciding at ``decision_times`` and holding each arm until
    the next decision (or ``horizon``). ``gains_oracle(t)`` is the reward
    vector of round ``t``.
    """
    times = [int(t) for t in decision_times]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ContractViolation('decision times must be strictly increasing')
    if times and (times[0] < 0 or times[-1] >= horizon):
        raise ContractViolation(f'decision times must lie in [0, {horizon})')
    arms = np.zeros(len(times), dtype=int)
    rewards = np.zeros(horizon)
    for j, start in enumerate(times):
        end = times[j + 1] if j + 1 < len(times) else horizon
        arm = exp3p_sample(state, rng)
        total = 0.0
        for t in range(start, end):
            rewards[t] = gains_oracle(t)[arm]
            total += rewards[t]
        arms[j] = arm
        exp3p_update(state, arm, min(total / (end - start), 1.0))
    return Exp3PRun(arms=arms, rewards=rewards, state=state)


# -- collision resolution epochs -------------------------------------------

@dataclass
class EpochState:
    """
    Epoch bookkeeping. ``settled_at`` is the first collision-free round of
    the epoch; from then on the user holds ``channel``.
    """

    T: int
    y: float = 0.5
    start: int = 0
    epoch: int = -1
    epoch_end: int = 0
    channel: int = None
    settled_at: int = None
    settled_reward: float = 0.0
    resolving_rounds: list = field(default_factory=list)

    @property
    def length(self):
        return math.ceil(self.T ** (1 - self.y))

    @property
    def n_epochs(self):
        return math.ceil(self.T / self.length)

    @property
    def settled(self):
        return self.settled_at is not None

    def bounds(self, epoch):
        s = self.start + epoch * self.length
        return s, min(s + self.length, self.start + self.T)


class MultiUserAgent(ChannelAgent):
    """
    Exp3.P over epochs of ``ceil(T^(1-y))`` rounds starting at ``start``.
    A user created mid-epoch resolves within the remainder of that epoch.
    """

    def __init__(self, M, T, rng, y=0.5, start=0, record_snapshots=False):
        if T < 4:
            raise ConfigError(f'horizon must be >= 4, got {T}')
        self.M, self.rng = M, rng
        self.epochs = EpochState(T=T, y=y, start=start)
        self.exp3p = Exp3PState.from_horizon(M, self.epochs.n_epochs)
        self.record_snapshots = record_snapshots
        self.snapshots = []

    @property
    def end(self):
        return self.epochs.start + self.epochs.T

    def _open_epoch(self, epoch):
        state = self.epochs
        state.epoch = epoch
        state.epoch_end = state.bounds(epoch)[1]
        state.channel, state.settled_at, state.settled_reward = None, None, 0.0

    def _close_epoch(self):
        """Feed the epoch's normalised settled reward to Exp3.P."""
        state = self.epochs
        if state.epoch < 0 or state.channel is None:
            return
        held = state.epoch_end - state.settled_at if state.settled else 0
        gain = state.settled_reward / held if held > 0 else 0.0
        if not state.settled:
            state.resolving_rounds.append(None)
            logger.debug('epoch %d ended without settling', state.epoch)
        exp3p_update(self.exp3p, state.channel, min(gain, 1.0))
        if self.record_snapshots:
            self.snapshots.append({'epoch': state.epoch, 'arm': state.channel, 'gain': gain,
                                   'p': self.exp3p.p.copy(), 'G_tilde': self.exp3p.G_tilde.copy()})
        state.channel = None

    def act(self, t):
        if not self.epochs.start <= t < self.end:
            raise ContractViolation(f'round {t} outside this learner\'s horizon [{self.epochs.start}, {self.end})')
        epoch = (t - self.epochs.start) // self.epochs.length
        if epoch != self.epochs.epoch:
            self._close_epoch()
            self._open_epoch(epoch)
        if not self.epochs.settled:
            self.epochs.channel = exp3p_sample(self.exp3p, self.rng)
        return self.epochs.channel

    def observe(self, t, channel, reward, collided):
        state = self.epochs
        if not state.settled and not collided:
            state.settled_at = t
            state.resolving_rounds.append(t - state.bounds(state.epoch)[0])
        if state.settled:
            state.settled_reward += reward

    def finish(self, t):
        self.epochs.epoch_end = min(self.epochs.epoch_end, t)
        self._close_epoch()

    def snapshot(self):
        return {'epoch': self.epochs.epoch, 'settled': self.epochs.settled, 'p': self.exp3p.p.tolist()}


def multiuser_epoch_step(agent, t, feedback=None):
    """
    Deliver last round's ``(channel, reward, collided)`` (if any) and return
    the channel for round ``t``.
    """
    if feedback is not None:
        agent.observe(t - 1, *feedback)
    return agent.act(t)


def _adversarial_respond(adversary, rng, n_slots):
    return lambda t, users, actions: adversarial_round(adversary, t, actions, rng, users, n_slots)


def run_multiuser(T, K, M, adversary, streams, y=0.5, observers=(), keep_trace=True, record_snapshots=False):
    """``K`` users over a known horizon ``T``."""
    if K > M:
        raise ConfigError(f'K={K} users exceed M={M} channels')
    if K < 1:
        raise ConfigError(f'K must be >= 1, got {K}')
    return drive(
        UserSchedule.static(K, T),
        lambda user, t: MultiUserAgent(M, T, streams.agent(user), y=y, record_snapshots=record_snapshots),
        _adversarial_respond(adversary, streams.adversary(), K),
        M,
        observers,
        keep_trace,
        keep_gains=keep_trace,
    )


# -- unknown horizon / dynamic users ----------------------------------------

def doubling_periods(tau, T):
    """Periods ``[tau(2^r - 1), tau(2^(r+1) - 1))`` clipped to ``T``."""
    if tau < 1:
        raise ConfigError(f'tau must be >= 1, got {tau}')
    periods, r = [], 0
    while tau * (2 ** r - 1) < T:
        start = tau * (2 ** r - 1)
        periods.append((start, min(start + tau * 2 ** r, T)))
        r += 1
    return periods


def period_of(t, tau):
    """``(r, start, length)`` of the doubling period holding round ``t``."""
    r = int(math.floor(math.log2(t / tau + 1)))
    while tau * (2 ** (r + 1) - 1) <= t:
        r += 1
    while tau * (2 ** r - 1) > t:
        r -= 1
    return r, tau * (2 ** r - 1), tau * 2 ** r


def default_tau(M, K, y=0.5):
    """
    Smallest tau whose first-period epochs are at least as long as the
    collision-resolution bound M^K / gamma.
    """
    def covers(tau):
        length = math.ceil(tau ** (1 - y))
        n = math.ceil(tau / length)
        gamma = exploration_parameters(M, n)[2]
        return length >= M ** K / gamma

    hi = 4
    while not covers(hi):
        hi *= 2
    lo = hi // 2
    while lo + 1 < hi:
        mid = (lo + hi) // 2
        if covers(mid):
            hi = mid
        else:
            lo = mid
    return hi


class DoublingAgent(ChannelAgent):
    """Fresh ``MultiUserAgent`` for every doubling period, aligned to the shared clock."""

    def __init__(self, M, tau, rng, y=0.5, record_snapshots=False):
        if tau < 4:
            raise ConfigError(f'tau must be >= 4, got {tau}')
        self.M, self.tau, self.rng, self.y = M, tau, rng, y
        self.record_snapshots = record_snapshots
        self.period = None
        self.inner = None
        self.snapshots = []

    def act(self, t):
        r, start, length = period_of(t, self.tau)
        if r != self.period:
            self._retire(t)
            self.period = r
            self.inner = MultiUserAgent(self.M, length, self.rng, self.y, start, self.record_snapshots)
        return self.inner.act(t)

    def observe(self, t, channel, reward, collided):
        self.inner.observe(t, channel, reward, collided)

    def _retire(self, t):
        if self.inner is None:
            return
        self.inner.finish(t)
        self.snapshots.extend({**row, 'period': self.period} for row in self.inner.snapshots)
        self.inner = None

    def finish(self, t):
        self._retire(t)

    def snapshot(self):
        return {'period': self.period, **(self.inner.snapshot() if self.inner else {})}


def run_doubling(tau, K, M, adversary, T, streams, y=0.5, observers=(), keep_trace=True, record_snapshots=False):
    """``K`` users that do not know ``T``; restarts at every doubling period."""
    if K > M:
        raise ConfigError(f'K={K} users exceed M={M} channels')
    return run_dynamic_adv(
        tau, UserSchedule.static(K, T), M, adversary, streams, y, observers, keep_trace, record_snapshots,
    )


def run_dynamic_adv(tau, schedule, M, adversary, streams, y=0.5, observers=(), keep_trace=True,
                    record_snapshots=False):
    """Doubling agents joining and leaving per ``schedule``."""
    schedule.validate(M)
    return drive(
        schedule,
        lambda user, t: DoublingAgent(M, tau, streams.agent(user), y, record_snapshots),
        _adversarial_respond(adversary, streams.adversary(), schedule.n_slots),
        M,
        observers,
        keep_trace,
        keep_gains=keep_trace,
    )


def snapshot_rows(agents):
    """Flatten recorded Exp3.P snapshots into (user, period, epoch, arm, p, G_tilde) rows."""
    rows = []
    for user, agent in sorted(agents.items()):
        for snap in getattr(agent, 'snapshots', []):
            for arm in range(snap['p'].size):
                rows.append({
                    'user': user,
                    'period': snap.get('period', 0),
                    'epoch': snap['epoch'],
                    'arm': arm,
                    'p': float(snap['p'][arm]),
                    'G_tilde': float(snap['G_tilde'][arm]),
                })
    return rows
