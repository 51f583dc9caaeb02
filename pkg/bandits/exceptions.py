"""Exception hierarchy shared by the simulation library and the commands."""


class SpectrumError(Exception):
    """Base class for every error raised by the bandits package."""


class ConfigError(SpectrumError):
    """Invalid or infeasible experiment configuration."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f'line {line}: {message}'
        super().__init__(message)


class ContractViolation(SpectrumError):
    """A runtime contract was broken (bad action, bad reward, ...)."""

    def __init__(self, message, round_index=None):
        self.round_index = round_index
        if round_index is not None:
            message = f'round {round_index}: {message}'
        super().__init__(message)

    def at_round(self, t):
        """Anchor this error to round ``t`` unless it already carries one."""
        if self.round_index is None:
            self.round_index = t
            self.args = (f'round {t}: {self.args[0]}',) + self.args[1:]
        return self


class EstimateIncompleteError(ContractViolation):
    """Some channel was never observed without collision during estimation."""

    def __init__(self, channels, round_index=None):
        self.channels = list(channels)
        super().__init__(
            f'no collision-free sample on channel(s) {self.channels}', round_index
        )


class AdversaryExhaustedError(ContractViolation):
    """A scripted reward tensor has no row for the requested round."""


class EmptyAllowedSetError(ContractViolation):
    """Alloc was asked to sample from an empty channel set."""
