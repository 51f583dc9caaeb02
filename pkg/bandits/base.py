from abc import ABC, abstractmethod


class ChannelAgent(ABC):
    """
    One user of the shared spectrum.

    The engine calls ``act`` for every active agent before delivering any
    observation of the same round, and an agent only ever sees its own
    (channel, reward, collided) triples plus the shared clock ``t``.
    """

    @abstractmethod
    def act(self, t):
        """Channel index to transmit on at round ``t``."""

    @abstractmethod
    def observe(self, t, channel, reward, collided):
        """Feedback for the channel chosen at round ``t``."""

    def snapshot(self):
        """Diagnostic state for checkpoint exports (override as needed)."""
        return {}

    def finish(self, t):
        """Called once when the user leaves, or the run ends, before round ``t``."""
