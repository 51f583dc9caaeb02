"""
The stochastic-setting user.

An agent first explores uniformly for ``T0`` rounds, estimating the number
of users from its collision count and the per-occupancy mean rewards by
clustering what it observed under collision. It then derives the optimal
occupancy vector ``f*`` and settles through ``Alloc``:

* more users than channels: ``Permute`` runs ``N0`` fixing epochs over
  shrinking channel sets and then cycles through the channels it settled on;
* otherwise every user fixes on one of the ``K_hat`` best channels and all
  of them rotate through that set in lockstep.

No user holds a channel for more than ``Tx`` consecutive rounds once the
estimation phase is over.
"""

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import special, stats
from sklearn.cluster import KMeans

from .base import ChannelAgent
from .env import UserSchedule, stochastic_round
from .exceptions import ConfigError, ContractViolation, EmptyAllowedSetError, EstimateIncompleteError
from .loop import drive

logger = logging.getLogger(__name__)


# -- phase-length formulas ---------------------------------------------------

def estimation_rounds(K, M, beta, epsilon, delta):
    """Estimation length guaranteeing |mu_hat - mu| <= epsilon w.p. 1 - delta."""
    log_term = math.log(2 * M * K * beta * (beta + 1) / delta)
    return math.ceil(32 * math.exp((K - 1) / (M - 1)) * M / epsilon ** 2 * log_term)


def user_count_rounds(K, M, delta):
    """Estimation length guaranteeing K_hat = K w.p. 1 - delta."""
    return math.ceil(M ** 2 * math.exp(2 * (K - 1) / (M - 1)) / (2 * 0.49 ** 2) * math.log(2 / delta))


def observation_floor(K, M, beta, epsilon, delta):
    """Samples per (user, channel, occupancy) that ``estimation_rounds`` guarantees."""
    return 16 / epsilon ** 2 * math.log(2 * M * K * beta * (beta + 1) / delta)


def default_fixing_rounds(K_hat, M, delta):
    """High-probability allowance for one Alloc phase."""
    return math.ceil(M * math.exp((K_hat - 1) / (M - 1)) * (1 + math.log(K_hat / delta)))


def regret_upper_bound(K, M, T0, Tc, N0):
    return K * (T0 + Tc) + N0 * K ** 2 * M * math.exp((K - 1) / (M - 1))


def occupancy_observation_counts(actions, M, beta):
    """
    ``counts[k, m, n-1]``: rounds in which user k sat on channel m with n
    users in total, for n = 1..beta. ``actions`` is a rounds x users matrix.
    """
    rounds, K = actions.shape
    counts = np.zeros((K, M, beta), dtype=int)
    for row in actions:
        f = np.bincount(row, minlength=M)
        n = f[row]
        keep = n <= beta
        np.add.at(counts, (np.arange(K)[keep], row[keep], n[keep] - 1), 1)
    return counts


@dataclass(frozen=True)
class StochConfig:
    M: int
    beta: int
    T0: int
    Tx: int
    N0: int
    Tc: int = None
    Tf_bound: int = None
    epsilon: float = 0.05
    delta: float = 0.05
    restarts: int = 10
    max_iters: int = 100
    known_parameters: bool = False
    estimation_snapshot_every: int = None

    def __post_init__(self):
        if self.M < 2:
            raise ConfigError(f'M must be >= 2, got {self.M}')
        if self.beta < 1:
            raise ConfigError(f'beta must be >= 1, got {self.beta}')
        if self.T0 < 1:
            raise ConfigError(f'T0 must be >= 1, got {self.T0}')
        if self.Tx < 1:
            raise ConfigError(f'Tx must be >= 1, got {self.Tx}')
        if not 2 <= self.N0 <= self.M:
            raise ConfigError(f'N0 must lie in [2, M={self.M}], got {self.N0}')
        if not 0 < self.delta < 1:
            raise ConfigError(f'delta must lie in (0, 1), got {self.delta}')

    @property
    def clustering_rounds(self):
        return self.T0 if self.Tc is None else self.Tc

    @property
    def exploration_rounds(self):
        """Uniform rounds feeding the estimates: estimation plus clustering."""
        return self.T0 + self.clustering_rounds

    @property
    def fixing_rounds(self):
        """
        Tf, shared by every agent so that fixing epochs and cycling slots
        line up. Without a pinned ``Tf_bound`` it is sized for beta*M users.
        """
        if self.Tf_bound is not None:
            return self.Tf_bound
        return default_fixing_rounds(self.beta * self.M, self.M, self.delta)

    def allocation_rounds(self, K_hat):
        """Rounds spent in fixing epochs before cycling/rotation starts."""
        epochs = self.N0 if K_hat > self.M else 1
        return epochs * (self.fixing_rounds + self.Tx)

    def schedule_length(self, K_hat):
        return self.exploration_rounds + self.allocation_rounds(K_hat)

    def with_confidence(self, delta):
        """
        Same config at confidence ``delta``: T0 (and a default Tc) grow with
        ln(C / delta), C = 2 M (beta M) beta (beta + 1), beta M standing in
        for the unknown user count.
        """
        c = 2 * self.M * (self.beta * self.M) * self.beta * (self.beta + 1)
        scale = math.log(c / delta) / math.log(c / self.delta)
        return dataclasses.replace(self, T0=math.ceil(self.T0 * scale), delta=delta)


# -- estimation --------------------------------------------------------------

@dataclass
class EstimationState:
    co: np.ndarray
    x1: np.ndarray
    x: list
    eta_c: int = 0
    rounds: int = 0

    @classmethod
    def empty(cls, M):
        return cls(co=np.zeros(M, dtype=int), x1=np.zeros(M), x=[[] for _ in range(M)])

    def record(self, channel, reward, collided):
        if not 0.0 <= reward <= 1.0:
            raise ContractViolation(f'reward {reward} outside [0, 1]')
        if collided:
            self.x[channel].append(reward)
            self.eta_c += 1
        else:
            self.co[channel] += 1
            self.x1[channel] += reward
        self.rounds += 1


@dataclass
class Estimates:
    K_hat: int
    mu_hat: np.ndarray
    f_star: np.ndarray
    balanced: bool
    best_channels: tuple = ()
    interpolated: list = field(default_factory=list)

    @property
    def mu_full(self):
        """``mu_hat`` with the occupancy beta+1 column set to 0."""
        return np.hstack([self.mu_hat, np.zeros((self.mu_hat.shape[0], 1))])


def estimate_k(eta_c, T0, M, beta):
    """User count from the number of collisions in T0 uniform rounds."""
    if eta_c >= T0:
        return beta * M
    ratio = (T0 - eta_c) / T0
    k = 1 + math.floor(math.log(ratio) / math.log(1 - 1 / M) + 0.5)
    return int(min(max(k, 1), beta * M))


def cluster(samples, k, restarts=10, max_iters=100, rng=None):
    """
    ``k`` centroids of 1-D ``samples``, sorted descending.

    Best-inertia k-means++/Lloyd run, after which every centroid is replaced
    by the mean of the samples nearest to it. With fewer than ``k`` distinct
    values, the distinct values are returned and the remaining slots are
    filled by successively halving the smallest one.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size == 0:
        raise ContractViolation('cannot cluster an empty sample list')
    if k < 1:
        raise ContractViolation(f'k must be >= 1, got {k}')
    rng = np.random.default_rng(0) if rng is None else rng
    distinct = np.unique(x)
    if distinct.size <= k:
        centroids = list(distinct[::-1])
        while len(centroids) < k:
            centroids.append(centroids[-1] / 2.0)
        return np.array(centroids)

    model = KMeans(
        n_clusters=k,
        init='k-means++',
        n_init=restarts,
        max_iter=max_iters,
        random_state=int(rng.integers(2 ** 31 - 1)),
        algorithm='lloyd',
    ).fit(x.reshape(-1, 1))
    centers = model.cluster_centers_.ravel()
    labels = np.argmin(np.abs(x[:, None] - centers[None, :]), axis=1)
    for r in range(k):
        members = x[labels == r]
        if members.size:
            centers[r] = members.mean()
    return np.sort(centers)[::-1]


_SPREAD_FLOOR = 1e-3
# components holding less than half a sample are reported as unobserved
_MIN_MASS = 0.5


def occupancy_shares(K_hat, M, beta):
    """
    How collided rounds split by occupancy when ``K_hat`` users pick
    channels uniformly: ``(shares, null_share)`` where ``shares[n-2]`` is
    the share of occupancy n for n = 2..beta+1 and ``null_share`` that of
    the larger occupancies, which pay 0.
    """
    others = stats.binom(K_hat - 1, 1.0 / M)
    collided = others.sf(0)
    if collided <= 0:
        return np.zeros(beta), 0.0
    return others.pmf(np.arange(1, beta + 1)) / collided, float(others.sf(beta) / collided)


def fit_occupancy_means(samples, shares, null_share=0.0, restarts=10, max_iters=100, rng=None, tol=1e-9):
    """
    Emitted mean of every component of a 1-D mixture whose weights are
    known: ``shares`` in decreasing-mean order plus a point mass at 0 of
    weight ``null_share``.

    Components are Gaussians with a common spread, censored at 0 because
    rewards are clamped; EM starts from the ``cluster`` centroids. A
    component's mean is the responsibility-weighted average of the samples,
    so it estimates what the channel actually pays. Components without
    weight or without samples come back as nan.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size == 0:
        raise ContractViolation('cannot fit an empty sample list')
    shares = np.asarray(shares, dtype=float)
    out = np.full(shares.size, np.nan)
    live = np.flatnonzero(shares > 0)
    if live.size == 0:
        return out
    k = live.size
    total = shares[live].sum() + null_share
    log_w = np.log(shares[live] / total)
    log_null = math.log(null_share / total) if null_share > 0 else -np.inf
    zero = x <= 0.0

    mu = cluster(x, k, restarts, max_iters, rng)
    spread = float(np.sqrt(np.mean(np.min((x[:, None] - mu[None, :]) ** 2, axis=1))))
    spread = max(spread, _SPREAD_FLOOR)
    for _ in range(max_iters):
        resp = _responsibilities(x, zero, mu, spread, log_w, log_null)[:, :k]
        mass = resp.sum(axis=0)
        a = -mu / spread
        mills = np.exp(stats.norm.logpdf(a) - stats.norm.logcdf(a))
        latent = np.where(zero[:, None], mu - spread * mills, x[:, None])
        censored_var = np.maximum(spread ** 2 * (1.0 - a * mills - mills ** 2), 0.0)
        update = np.where(mass > 0, (resp * latent).sum(axis=0) / np.maximum(mass, 1e-300), mu)
        sq = (latent - update) ** 2 + np.where(zero[:, None], censored_var, 0.0)
        spread = max(math.sqrt((resp * sq).sum() / max(mass.sum(), 1e-300)), _SPREAD_FLOOR)
        done = np.max(np.abs(update - mu)) < tol
        mu = update
        if done:
            break

    resp = _responsibilities(x, zero, mu, spread, log_w, log_null)[:, :k]
    mass = resp.sum(axis=0)
    emitted = np.where(mass >= _MIN_MASS, (resp * x[:, None]).sum(axis=0) / np.maximum(mass, 1e-300), np.nan)
    order = np.argsort(-mu, kind='stable')
    out[live] = emitted[order]
    return out


def _responsibilities(x, zero, mu, spread, log_w, log_null):
    log_p = np.empty((x.size, mu.size + 1))
    log_p[:, :-1] = log_w + stats.norm.logpdf(x[:, None], mu[None, :], spread)
    log_p[zero, :-1] = log_w + stats.norm.logcdf(-mu / spread)
    log_p[:, -1] = np.where(zero, log_null, -np.inf)
    return special.softmax(log_p, axis=1)


def _interpolate_missing(row, missing):
    """Linear backfill of missing occupancies; occupancy beta+1 counts as 0."""
    known = [n for n in range(row.size) if n not in missing]
    xs = np.array(known + [row.size], dtype=float)
    ys = np.append(row[known], 0.0)
    for n in missing:
        row[n] = np.interp(n, xs, ys)
    return row


def build_estimates(est, cfg, rng=None, interim=False):
    """K_hat, mu_hat and f* from an estimation phase's observations."""
    missing = np.flatnonzero(est.co == 0).tolist()
    if missing:
        raise EstimateIncompleteError(missing)
    M, beta = cfg.M, cfg.beta
    K_hat = estimate_k(est.eta_c, est.rounds, M, beta)
    mu_hat = np.full((M, beta), np.nan)
    mu_hat[:, 0] = est.x1 / est.co

    if K_hat <= M:
        best = best_channels(mu_hat[:, 0], K_hat)
        f_star = np.zeros(M, dtype=int)
        f_star[list(best)] = 1
        return Estimates(K_hat=K_hat, mu_hat=mu_hat, f_star=f_star, balanced=_balanced(f_star), best_channels=best)

    interpolated = []
    shares, null_share = occupancy_shares(K_hat, M, beta)
    for m in range(M):
        if beta < 2:
            break
        samples = est.x[m]
        if samples:
            fitted = fit_occupancy_means(samples, shares, null_share, cfg.restarts, cfg.max_iters, rng)
            # the occupancy beta+1 component only absorbs those samples
            mu_hat[m, 1:] = fitted[:beta - 1]
        gaps = [n for n in range(1, beta) if np.isnan(mu_hat[m, n])]
        if gaps:
            _interpolate_missing(mu_hat[m], gaps)
            interpolated.extend((m, n + 1) for n in gaps)
    if interpolated and not interim:
        logger.warning('backfilled mu_hat for (channel, occupancy) %s', interpolated)
    mu_hat = np.clip(mu_hat, 0.0, 1.0)
    f_star = optimal_allocation(mu_hat, K_hat)
    return Estimates(
        K_hat=K_hat, mu_hat=mu_hat, f_star=f_star, balanced=_balanced(f_star), interpolated=interpolated,
    )


def exact_estimates(table, K, cfg):
    """The estimates an agent would hold if it knew the table and K."""
    mu_hat = np.array(table.effective_means()[:, :cfg.beta])
    if K <= cfg.M:
        best = best_channels(mu_hat[:, 0], K)
        f_star = np.zeros(cfg.M, dtype=int)
        f_star[list(best)] = 1
        return Estimates(K_hat=K, mu_hat=mu_hat, f_star=f_star, balanced=_balanced(f_star), best_channels=best)
    f_star = optimal_allocation(mu_hat, K)
    return Estimates(K_hat=K, mu_hat=mu_hat, f_star=f_star, balanced=_balanced(f_star))


def best_channels(mu1, count):
    """Indices of the ``count`` largest single-user means, best first."""
    order = np.argsort(-np.asarray(mu1), kind='stable')
    return tuple(int(m) for m in order[:count])


def _balanced(f_star):
    return bool(2 * f_star.max() <= f_star.sum())


# -- optimal occupancy -------------------------------------------------------

def _channel_values(mu, K):
    M, width = mu.shape
    values = np.zeros((M, K + 1))
    j = np.arange(1, min(K, width) + 1)
    values[:, 1:j.size + 1] = j * mu[:, :j.size]
    return values


def allocation_value(mu, f):
    """Total expected reward of occupancy vector ``f`` (means zero past the table)."""
    mu = np.asarray(mu, dtype=float)
    total = 0.0
    for m, n in enumerate(np.asarray(f, dtype=int)):
        if 1 <= n <= mu.shape[1]:
            total += n * mu[m, n - 1]
    return total


def optimal_allocation(mu, K):
    """
    Occupancy vector maximising sum_i f(i) mu(i, f(i)) with sum f = K.

    ``mu[m][n-1]`` is the mean with n users; occupancies past the table pay
    0. Dynamic programme over channels; among optimal vectors the
    lexicographically smallest is returned.
    """
    mu = np.asarray(mu, dtype=float)
    if K < 1:
        raise ContractViolation(f'K must be >= 1, got {K}')
    if np.isnan(mu).any():
        raise ContractViolation('mean table contains missing entries')
    M = mu.shape[0]
    values = _channel_values(mu, K)
    best = np.full((M + 1, K + 1), -np.inf)
    best[M, 0] = 0.0
    for m in range(M - 1, -1, -1):
        for r in range(K + 1):
            best[m, r] = np.max(values[m, :r + 1] + best[m + 1, r::-1])
    f = np.zeros(M, dtype=int)
    remaining = K
    for m in range(M):
        candidates = values[m, :remaining + 1] + best[m + 1, remaining::-1]
        j = int(np.flatnonzero(candidates >= best[m, remaining] - 1e-12)[0])
        f[m] = j
        remaining -= j
    return f


# -- allocation phase --------------------------------------------------------

class Phase(str, Enum):
    ESTIMATING = 'estimating'
    CLUSTERING = 'clustering'
    FIXING = 'fixing'
    CYCLING = 'cycling'
    ROTATING = 'rotating'


@dataclass
class AllocDecision:
    channel: int
    fixed: bool


@dataclass
class PhaseState:
    """Allocation bookkeeping of one agent."""

    M: int
    Tx: int
    epoch_length: int = 0
    n_epochs: int = 1
    fixing_rounds: int = None
    phase: Phase = Phase.ESTIMATING
    epoch: int = -1
    epoch_round: int = 0
    allowed: tuple = ()
    fixed: int = None
    relaxed: bool = False
    quiet: bool = False
    channel: int = None
    run_channel: int = None
    run_length: int = 0
    q: list = field(default_factory=list)
    rotation: tuple = ()
    overfill: np.ndarray = None
    repairing: int = None
    fix_rounds: list = field(default_factory=list)
    unfixed_epochs: int = 0
    overfilled_epochs: int = 0

    @property
    def blocked(self):
        """Channel whose Tx budget is used up, if any."""
        return self.run_channel if self.run_length >= self.Tx else None

    @property
    def reserved(self):
        """Channels this user holds in later slots."""
        return {c for c in self.q if c is not None} | set(self.rotation)

    def move(self, channel):
        if channel == self.run_channel:
            self.run_length += 1
        else:
            self.run_channel, self.run_length = channel, 1
        self.channel = channel
        return channel

    def begin_epoch(self, epoch, allowed):
        self.close_epoch()
        self.phase = Phase.FIXING
        self.epoch, self.epoch_round = epoch, 0
        self.allowed = tuple(allowed)
        self.fixed, self.relaxed = None, False
        self.fix_rounds.append(None)

    def close_epoch(self):
        """
        Record q(i), the channel fixed on in the running epoch. An epoch
        without a fix leaves an empty slot that cycling keeps searching.
        """
        if self.phase is not Phase.FIXING:
            return
        if self.fixed is None:
            self.unfixed_epochs += 1
            logger.warning('no fix within fixing epoch %d; its cycling slot stays open', self.epoch)
        self.q.append(self.fixed)


def overfill_cost(estimates):
    """Estimated reward lost on each channel if one user more than f* sits on it."""
    mu = estimates.mu_full
    return np.array([
        _channel_value(mu[m], n) - _channel_value(mu[m], n + 1) for m, n in enumerate(estimates.f_star)
    ])


def _channel_value(row, n):
    return n * row[n - 1] if 1 <= n <= row.size else 0.0


def infer_occupancy(mu_row, reward, collided):
    """
    Occupancy whose estimated mean is nearest to ``reward``. The collision
    flag is exact, so a clean round is occupancy 1 and a collided one is
    matched against occupancies 2 and up.
    """
    if not collided:
        return 1
    candidates = [(abs(reward - mean), n + 1) for n, mean in enumerate(mu_row) if n >= 1 and np.isfinite(mean)]
    return min(candidates)[1] if candidates else 2


def _cheapest(state, channels, rng):
    """Uniform pick among the (up to two) ``channels`` with the lowest overfill cost."""
    channels = list(channels)
    if state.overfill is not None and len(channels) > 2:
        channels = sorted(channels, key=lambda c: (state.overfill[c], c))[:2]
    return channels[int(rng.integers(len(channels)))]


def _step_off(state, rng):
    """Channel for the single round a fixed user spends away from it at the Tx cap."""
    reserved = state.reserved
    for pool in (state.allowed, range(state.M)):
        choices = [c for c in pool if c != state.fixed and c not in reserved]
        if choices:
            return _cheapest(state, choices, rng)
    return _cheapest(state, [c for c in range(state.M) if c != state.fixed], rng)


def alloc_choose(state, rng):
    """
    Channel of the next round: the fixed one, or a draw from A. A fixed
    user stays fixed for the whole epoch and steps off for one round at
    the Tx cap. On the shared step-off rounds (``state.quiet``) every user
    changes channel and nobody fixes, so a fixed user only ever reaches
    the cap on such a round. Once ``fixing_rounds`` have passed without a
    fix the user settles for one user over f*, trying the cheapest
    channels to overfill first.
    """
    if not state.allowed:
        raise EmptyAllowedSetError('Alloc has no channel to choose from')
    blocked = state.blocked
    if state.fixed is not None:
        if state.fixed != blocked and not state.quiet:
            return state.move(state.fixed)
        return state.move(_step_off(state, rng))
    if not state.relaxed and state.fixing_rounds is not None and state.epoch_round >= state.fixing_rounds:
        state.relaxed = True
        logger.debug('epoch %d: no fix after %d rounds, accepting one user over f*', state.epoch, state.epoch_round)
    leave = state.run_channel if state.quiet else blocked
    choices = [c for c in state.allowed if c != leave]
    if not choices:
        choices = [c for c in range(state.M) if c != leave]
    if state.relaxed:
        return state.move(_cheapest(state, choices, rng))
    return state.move(choices[int(rng.integers(len(choices)))])


def alloc_observe(state, estimates, channel, reward, collided):
    """Fix on ``channel`` if its inferred occupancy does not exceed f* (f* + 1 once relaxed)."""
    state.epoch_round += 1
    if state.fixed is not None or state.quiet:
        return
    n_hat = infer_occupancy(estimates.mu_full[channel], reward, collided)
    target = estimates.f_star[channel]
    if n_hat <= target:
        state.fixed = channel
        if state.fix_rounds and state.fix_rounds[-1] is None:
            state.fix_rounds[-1] = state.epoch_round
    elif state.relaxed and n_hat == target + 1:
        state.fixed = channel
        state.overfilled_epochs += 1
        logger.info('settled on channel %d one user over f*=%d', channel, target)


def step_off_round(epoch_round, Tx, epoch_length):
    """
    Step-off rounds of a fixing epoch: its first round and every round a
    multiple of Tx before its end. Runs then start on a step-off round and
    never reach Tx on any other round.
    """
    return Tx > 1 and (epoch_round == 0 or (epoch_length - epoch_round) % Tx == 0)


def alloc_step(state, estimates, reward, collided, rng):
    """
    One Alloc round: digest the observation of the previous choice (if
    ``reward`` is not None), then choose the next channel.
    """
    if reward is not None and state.channel is not None:
        alloc_observe(state, estimates, state.channel, reward, collided)
    channel = alloc_choose(state, rng)
    return AllocDecision(channel=channel, fixed=state.fixed is not None)


def permute_schedule(state, r, rng):
    """
    Permute: ``N0`` fixing epochs of ``epoch_length`` rounds over
    A_i = [M] minus the channels settled in earlier epochs, then channel
    q(j) for Tx rounds with j cycling through 0..N0-1. ``r`` counts rounds
    since the allocation phase began. A slot whose epoch ended without a
    fix is spent searching (relaxed) among the channels not in q until
    the user settles; the channel then fills the slot.
    """
    epoch = r // state.epoch_length
    if epoch < state.n_epochs:
        if epoch != state.epoch:
            state.begin_epoch(epoch, [c for c in range(state.M) if c not in state.q])
        state.quiet = step_off_round(r - epoch * state.epoch_length, state.Tx, state.epoch_length)
        return alloc_choose(state, rng)
    if state.phase is not Phase.CYCLING:
        state.close_epoch()
        state.quiet = False
        state.phase = Phase.CYCLING
    slot = ((r - state.n_epochs * state.epoch_length) // state.Tx) % state.n_epochs
    channel = state.q[slot]
    if channel is not None:
        state.repairing = None
        return state.move(channel)
    if state.repairing != slot:
        state.repairing = slot
        state.allowed = tuple(c for c in range(state.M) if c not in state.q)
        state.fixed, state.relaxed = None, True
    return alloc_choose(state, rng)


def repair_observe(state, estimates, channel, reward, collided):
    """Observation inside an open cycling slot; a settled channel fills the slot."""
    alloc_observe(state, estimates, channel, reward, collided)
    if state.fixed is not None:
        state.q[state.repairing] = state.fixed
        logger.info('open cycling slot %d filled with channel %d', state.repairing, state.fixed)
        state.repairing = None


def rotate_best_k(state, r, rng):
    """
    K_hat <= M: one fixing epoch over the best-K_hat channels, then every Tx
    rounds each user advances to the next channel of the rotation list.
    """
    if r < state.epoch_length:
        if state.epoch != 0:
            state.begin_epoch(0, state.allowed or state.rotation)
        state.quiet = step_off_round(r, state.Tx, state.epoch_length)
        return alloc_choose(state, rng)
    if state.phase is not Phase.ROTATING:
        state.close_epoch()
        state.quiet = False
        state.phase = Phase.ROTATING
    held = state.q[0]
    position = state.rotation.index(held) if held in state.rotation else 0
    slot = (r - state.epoch_length) // state.Tx
    return state.move(state.rotation[(position + slot + 1) % len(state.rotation)])


# -- the agent ---------------------------------------------------------------

class StochasticAgent(ChannelAgent):
    """
    One user running the estimation + allocation algorithm from round
    ``start`` on. ``oracle=(table, K)`` replaces the estimates by the true
    values (known-parameters baseline).
    """

    def __init__(self, cfg, rng, cluster_rng=None, start=0, oracle=None):
        self.cfg = cfg
        self.rng = rng
        self.cluster_rng = cluster_rng if cluster_rng is not None else rng
        self.start = start
        self.oracle = oracle
        self.estimation = EstimationState.empty(cfg.M)
        self.estimates = None
        self.state = PhaseState(M=cfg.M, Tx=cfg.Tx)
        self.progress = []

    @property
    def allocation_start(self):
        return self.cfg.exploration_rounds

    def _ensure_estimates(self):
        if self.estimates is not None:
            return self.estimates
        if self.oracle is not None:
            table, K = self.oracle
            self.estimates = exact_estimates(table, K, self.cfg)
        else:
            self.estimates = build_estimates(self.estimation, self.cfg, self.cluster_rng)
        est, state = self.estimates, self.state
        state.fixing_rounds = self.cfg.fixing_rounds
        state.epoch_length = self.cfg.fixing_rounds + self.cfg.Tx
        state.overfill = overfill_cost(est)
        if est.K_hat > self.cfg.M:
            state.n_epochs = self.cfg.N0
            if not est.balanced:
                logger.info('f* %s puts more than half the users on one channel', est.f_star.tolist())
        else:
            state.n_epochs = 1
            state.allowed = est.best_channels
            state.rotation = est.best_channels if len(est.best_channels) > 1 else best_channels(est.mu_hat[:, 0], 2)
        logger.debug('estimates: K_hat=%d f*=%s', est.K_hat, est.f_star.tolist())
        return est

    def act(self, t):
        r = t - self.start
        if r < self.cfg.T0:
            self.state.phase = Phase.ESTIMATING
            return self.state.move(int(self.rng.integers(self.cfg.M)))
        if r < self.allocation_start:
            # exploration goes on while the estimates are computed
            self.state.phase = Phase.CLUSTERING
            choices = [c for c in range(self.cfg.M) if c != self.state.blocked]
            return self.state.move(choices[int(self.rng.integers(len(choices)))])
        est = self._ensure_estimates()
        a = r - self.allocation_start
        if est.K_hat > self.cfg.M:
            return permute_schedule(self.state, a, self.rng)
        return rotate_best_k(self.state, a, self.rng)

    def observe(self, t, channel, reward, collided):
        r = t - self.start
        if r < self.allocation_start:
            self.estimation.record(channel, reward, collided)
            rounds = self.estimation.rounds
            every = self.cfg.estimation_snapshot_every
            if rounds == self.allocation_start:
                self._record_progress(final=True)
            elif every and rounds % every == 0:
                self._record_progress()
        elif self.state.phase is Phase.FIXING:
            alloc_observe(self.state, self.estimates, channel, reward, collided)
        elif self.state.repairing is not None:
            repair_observe(self.state, self.estimates, channel, reward, collided)

    def _record_progress(self, final=False):
        if final:
            est = self._ensure_estimates()
        else:
            quick = dataclasses.replace(self.cfg, restarts=1)
            try:
                est = build_estimates(self.estimation, quick, self.cluster_rng, interim=True)
            except EstimateIncompleteError:
                est = None
        if est is None:
            K_hat = estimate_k(self.estimation.eta_c, self.estimation.rounds, self.cfg.M, self.cfg.beta)
            self.progress.append({'round': self.estimation.rounds, 'K_hat': K_hat, 'mu_hat': None, 'f_star': None})
        else:
            self.progress.append({
                'round': self.estimation.rounds, 'K_hat': est.K_hat,
                'mu_hat': est.mu_hat.copy(), 'f_star': est.f_star.copy(),
            })

    def snapshot(self):
        est = self.estimates
        return {
            'phase': self.state.phase.value,
            'K_hat': None if est is None else est.K_hat,
            'q': list(self.state.q),
            'unfixed_epochs': self.state.unfixed_epochs,
            'overfilled_epochs': self.state.overfilled_epochs,
            'fix_rounds': list(self.state.fix_rounds),
        }


# -- dynamic users -------------------------------------------------------------

def epoch_bounds(tau, r):
    """Rounds [start, end) of dynamic epoch ``r`` (lengths tau, 2 tau, 3 tau, ...)."""
    return tau * r * (r + 1) // 2, tau * (r + 1) * (r + 2) // 2


def epoch_of(t, tau):
    r = int((math.isqrt(8 * (t // tau) + 1) - 1) // 2)
    while epoch_bounds(tau, r)[1] <= t:
        r += 1
    while epoch_bounds(tau, r)[0] > t:
        r -= 1
    return r


class DynamicStochasticAgent(ChannelAgent):
    """
    Restarts the static algorithm at every epoch boundary with confidence
    delta / 2^(r+1). A user joining mid-epoch starts immediately and falls
    in step with the others at the next boundary.
    """

    def __init__(self, cfg, tau, rng, cluster_rng=None, delta=None, oracle=None):
        self.cfg, self.tau, self.rng = cfg, tau, rng
        self.cluster_rng = cluster_rng if cluster_rng is not None else rng
        self.delta = cfg.delta if delta is None else delta
        self.oracle = oracle
        self.epoch = None
        self.inner = None
        self.restarts = 0

    def _restart(self, t, r):
        cfg = self.cfg.with_confidence(self.delta / 2 ** (r + 1))
        self.inner = StochasticAgent(cfg, self.rng, self.cluster_rng, start=t, oracle=self.oracle)
        self.epoch = r
        self.restarts += 1

    def act(self, t):
        r = epoch_of(t, self.tau)
        if r != self.epoch:
            self._restart(t, r)
        return self.inner.act(t)

    def observe(self, t, channel, reward, collided):
        self.inner.observe(t, channel, reward, collided)

    def snapshot(self):
        return {'epoch': self.epoch, 'restarts': self.restarts, **self.inner.snapshot()}


def minimum_tau(cfg, K):
    """Smallest epoch length that fits one static run for ``K`` users."""
    return cfg.schedule_length(K)


def _stochastic_respond(table, env_rng):
    return lambda t, users, actions: stochastic_round(table, actions, env_rng)


def run_stochastic(cfg, table, K, horizon, streams, observers=(), keep_trace=True):
    """
    ``K`` users running the static algorithm for ``horizon`` rounds. With
    ``cfg.known_parameters`` each agent is handed the true means and K.
    """
    if not 1 <= K <= cfg.beta * cfg.M:
        raise ConfigError(f'K={K} users need 1 <= K <= beta*M = {cfg.beta * cfg.M}')
    oracle = (table, K) if cfg.known_parameters else None
    return drive(
        UserSchedule.static(K, horizon),
        lambda user, t: StochasticAgent(cfg, streams.agent(user), streams.cluster(user), start=t, oracle=oracle),
        _stochastic_respond(table, streams.environment()),
        cfg.M,
        observers,
        keep_trace,
    )


def dynamic_stochastic(cfg, schedule, table, tau, streams, delta=None, observers=(), keep_trace=True):
    """Run the dynamic wrapper over ``schedule``."""
    schedule.validate(cfg.beta * cfg.M)
    minimum = minimum_tau(cfg, schedule.max_active())
    if tau < minimum:
        raise ConfigError(f'tau={tau} is below the minimum epoch length {minimum}')
    return drive(
        schedule,
        lambda user, t: DynamicStochasticAgent(cfg, tau, streams.agent(user), streams.cluster(user), delta),
        _stochastic_respond(table, streams.environment()),
        cfg.M,
        observers,
        keep_trace,
    )


def simulate_fixing_phase(table, K, estimates, rng, max_rounds=100000):
    """
    One Alloc phase with ``K`` users sharing ``estimates``; returns each
    user's fixing round (1-based).
    """
    states = [PhaseState(M=table.M, Tx=max_rounds + 1) for _ in range(K)]
    for state in states:
        state.begin_epoch(0, range(table.M))
    fixed_at = np.zeros(K, dtype=int)
    for t in range(1, max_rounds + 1):
        actions = [alloc_choose(state, rng) for state in states]
        feedback = stochastic_round(table, actions, rng)
        for k, state in enumerate(states):
            alloc_observe(state, estimates, actions[k], feedback.rewards[k], feedback.collided[k])
            if fixed_at[k] == 0 and state.fixed is not None:
                fixed_at[k] = t
        if fixed_at.all():
            return fixed_at
    raise ContractViolation(f'users {np.flatnonzero(fixed_at == 0).tolist()} did not fix in {max_rounds} rounds')
