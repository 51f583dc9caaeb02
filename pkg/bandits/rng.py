"""
Random stream splitting.

Every generator used by a simulation is derived from one root seed with
``SeedSequence(root_seed, spawn_key=(trial, purpose, user))``. A trial
therefore replays identically no matter which process runs it or in which
order trials complete, and two users never share a stream.
"""

from enum import IntEnum

import numpy as np


class Purpose(IntEnum):
    ENVIRONMENT = 0
    AGENT = 1
    ADVERSARY = 2
    SCHEDULE = 3
    CLUSTER = 4


# spawn_key slot used for streams that do not belong to a user
SHARED = 2**32 - 1


def substream(root_seed, trial, purpose, user=SHARED):
    """Generator for one (trial, purpose, user) triple."""
    seq = np.random.SeedSequence(int(root_seed), spawn_key=(int(trial), int(purpose), int(user)))
    return np.random.Generator(np.random.PCG64(seq))


class TrialStreams:
    """Factory of the substreams of a single trial."""

    def __init__(self, root_seed, trial):
        self.root_seed = int(root_seed)
        self.trial = int(trial)

    def environment(self):
        return substream(self.root_seed, self.trial, Purpose.ENVIRONMENT)

    def adversary(self):
        return substream(self.root_seed, self.trial, Purpose.ADVERSARY)

    def schedule(self):
        return substream(self.root_seed, self.trial, Purpose.SCHEDULE)

    def agent(self, user):
        return substream(self.root_seed, self.trial, Purpose.AGENT, user)

    def cluster(self, user):
        return substream(self.root_seed, self.trial, Purpose.CLUSTER, user)
