"""Synchronous shared-clock round loop binding agents to an environment."""

import logging
from dataclasses import dataclass

import numpy as np

from .exceptions import ContractViolation
from .env import EventKind

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RoundOutcome:
    t: int
    users: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    collided: np.ndarray
    occupancy: np.ndarray
    gains: np.ndarray = None

    @property
    def active(self):
        return frozenset(self.users.tolist())


class RoundLoop:
    """
    Drives one trial.

    ``agent_factory(user, t)`` builds the agent of a user joining at round
    ``t``; ``respond(t, users, actions)`` is the environment and returns a
    ``RoundFeedback``; each observer is called with the ``RoundOutcome`` of
    every round.
    """

    def __init__(self, schedule, agent_factory, respond, observers=()):
        self.schedule = schedule
        self.agent_factory = agent_factory
        self.respond = respond
        self.observers = list(observers)
        self.agents = {}
        self.retired = {}
        self.current_time = 0
        for observer in self.observers:
            if hasattr(observer, 'bind'):
                observer.bind(self)

    def _apply_events(self, t):
        if t == 0:
            for user in range(self.schedule.initial_users):
                self.agents[user] = self.agent_factory(user, 0)
        for event in self.schedule.events_at(t):
            if event.kind is EventKind.JOIN:
                self.agents[event.user] = self.agent_factory(event.user, t)
            elif event.user in self.agents:
                agent = self.agents.pop(event.user)
                agent.finish(t)
                self.retired[event.user] = agent

    def step(self):
        """Advance the simulation by one round."""
        t = self.current_time
        self._apply_events(t)
        users = np.array(sorted(self.agents), dtype=int)
        try:
            actions = np.array([self.agents[u].act(t) for u in users.tolist()], dtype=int)
            feedback = self.respond(t, users, actions)
            for i, user in enumerate(users.tolist()):
                self.agents[user].observe(t, int(actions[i]), float(feedback.rewards[i]), bool(feedback.collided[i]))
        except ContractViolation as exc:
            raise exc.at_round(t)
        outcome = RoundOutcome(
            t=t,
            users=users,
            actions=actions,
            rewards=np.asarray(feedback.rewards, dtype=float),
            collided=np.asarray(feedback.collided, dtype=bool),
            occupancy=feedback.occupancy,
            gains=feedback.gains,
        )
        for observer in self.observers:
            observer(outcome)
        self.current_time += 1
        return outcome

    def run(self, horizon=None):
        """Play rounds up to ``horizon``; returns every agent that took part, by user id."""
        horizon = self.schedule.horizon if horizon is None else horizon
        while self.current_time < horizon:
            self.step()
        for agent in self.agents.values():
            agent.finish(self.current_time)
        return {**self.retired, **self.agents}


@dataclass
class Trace:
    """Per-round record of a trial; user columns are slots, -1 marks inactive."""

    actions: np.ndarray
    rewards: np.ndarray
    collided: np.ndarray
    occupancy: np.ndarray
    gains: np.ndarray = None

    @property
    def horizon(self):
        return self.actions.shape[0]

    @property
    def active(self):
        return self.actions >= 0

    def system_rewards(self):
        return self.rewards.sum(axis=1)


class TraceRecorder:
    """Observer filling a ``Trace``; pass ``keep_gains`` for adversarial runs."""

    def __init__(self, horizon, n_slots, M, keep_gains=False):
        self.trace = Trace(
            actions=np.full((horizon, n_slots), -1, dtype=int),
            rewards=np.zeros((horizon, n_slots)),
            collided=np.zeros((horizon, n_slots), dtype=bool),
            occupancy=np.zeros((horizon, M), dtype=int),
            gains=np.zeros((horizon, n_slots, M)) if keep_gains else None,
        )

    def __call__(self, outcome):
        t, users = outcome.t, outcome.users
        self.trace.actions[t, users] = outcome.actions
        self.trace.rewards[t, users] = outcome.rewards
        self.trace.collided[t, users] = outcome.collided
        self.trace.occupancy[t] = outcome.occupancy
        if self.trace.gains is not None and outcome.gains is not None:
            self.trace.gains[t, users] = outcome.gains


@dataclass
class AgentRun:
    trace: Trace
    agents: dict


def drive(schedule, agent_factory, respond, M, observers=(), keep_trace=True, keep_gains=False):
    """Run ``schedule`` to its horizon, optionally recording the full ``Trace``."""
    observers = list(observers)
    recorder = None
    if keep_trace:
        recorder = TraceRecorder(schedule.horizon, schedule.n_slots, M, keep_gains=keep_gains)
        observers.append(recorder)
    agents = RoundLoop(schedule, agent_factory, respond, observers).run()
    return AgentRun(trace=recorder.trace if recorder else None, agents=agents)


class AgentSnapshots:
    """Observer collecting ``agent.snapshot()`` of every active user at ``points``."""

    def __init__(self, points):
        self.points = set(int(p) for p in points)
        self.rows = []
        self.loop = None

    def bind(self, loop):
        self.loop = loop

    def __call__(self, outcome):
        rounds = outcome.t + 1
        if rounds in self.points:
            for user, agent in sorted(self.loop.agents.items()):
                self.rows.append({'t': rounds, 'user': user, **agent.snapshot()})
