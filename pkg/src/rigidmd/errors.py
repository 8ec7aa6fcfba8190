class RigidMDError(Exception):
    """Base class for all errors raised by this package."""


class ModelError(RigidMDError):
    """Invalid molecular model or system composition."""


class ConfigurationError(RigidMDError):
    """A physically invalid configuration, e.g. overlapping interaction sites."""


class ConfigError(RigidMDError):
    """Simulation config failed validation.

    ``problems`` lists every violation found, not only the first one.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class CheckpointError(RigidMDError):
    """Unreadable, truncated or incompatible checkpoint data."""


class SimulationError(RigidMDError):
    """Fatal runtime failure, e.g. non-finite coordinates."""
