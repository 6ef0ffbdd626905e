"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration value, unknown key, or inconsistent block."""


class SimulationFault(RuntimeError):
    """The surrogate dynamics produced a non-finite state."""


class CheckpointError(RuntimeError):
    """A checkpoint file is unreadable, truncated, or incompatible."""


class RolloutError(RuntimeError):
    """An evaluation task failed; carries the task identity."""

    def __init__(self, message, iteration=None, direction=None, sign=None, scenario_id=None):
        super().__init__(message)
        self.iteration = iteration
        self.direction = direction
        self.sign = sign
        self.scenario_id = scenario_id
