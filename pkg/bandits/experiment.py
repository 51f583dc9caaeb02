"""Validated experiment description shared by the engine and the commands."""

import hashlib
from dataclasses import dataclass, field

from .env import AdversaryModel, RewardTable, UserSchedule, arrival_schedule
from .stoch_agent import StochConfig

STOCHASTIC = 'stochastic'
ADVERSARIAL = 'adversarial'
DOUBLING = 'doubling'
DYNAMIC_STOCHASTIC = 'dynamic-stochastic'
DYNAMIC_ADVERSARIAL = 'dynamic-adversarial'

SCENARIOS = [STOCHASTIC, ADVERSARIAL, DOUBLING, DYNAMIC_STOCHASTIC, DYNAMIC_ADVERSARIAL]
STOCHASTIC_FAMILY = {STOCHASTIC, DYNAMIC_STOCHASTIC}
DYNAMIC = {DYNAMIC_STOCHASTIC, DYNAMIC_ADVERSARIAL}


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    name: str
    scenario: str
    users: int
    M: int
    table: RewardTable = None
    adversary: AdversaryModel = None
    stoch: StochConfig = None
    events: tuple = ()
    arrival_zeta: float = None
    y: float = 0.5
    tau: int = None
    horizon: int = None
    trials: int = 1
    seed: int = 0
    checkpoint_every: int = None
    separability_c: float = 16.0
    separability_epsilon2: float = 0.01
    text: str = field(default='', repr=False)

    @property
    def stochastic(self):
        return self.scenario in STOCHASTIC_FAMILY

    @property
    def dynamic(self):
        return self.scenario in DYNAMIC

    @property
    def user_limit(self):
        """Largest number of simultaneously active users the model allows."""
        return self.table.beta * self.M if self.stochastic else self.M

    @property
    def sha256(self):
        return hashlib.sha256(self.text.encode('utf-8')).hexdigest()

    def schedule(self, rng=None):
        """Active users over the horizon; random arrivals draw from ``rng``."""
        if self.arrival_zeta is not None:
            schedule = arrival_schedule(self.users, self.horizon, self.arrival_zeta, self.user_limit, rng)
        else:
            schedule = UserSchedule(initial_users=self.users, horizon=self.horizon, events=self.events)
        schedule.validate(self.user_limit)
        return schedule
