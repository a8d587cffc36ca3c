"""Exception types shared across the package."""


class PropencError(Exception):
    """Base class for all package errors."""


class DimensionError(PropencError, ValueError):
    """Tensor or matrix shapes do not line up."""


class InputError(PropencError, ValueError):
    """A caller-supplied value violates an operation's precondition."""


class IngestError(PropencError, ValueError):
    """A raw input file is malformed beyond the tolerated rate."""


class DatasetError(PropencError, ValueError):
    """A dataset violates a structural requirement (e.g. too few candidates)."""


class MetricError(PropencError, ValueError):
    """A metric is undefined for the given inputs."""


class TapeError(PropencError, RuntimeError):
    """Misuse of the autodiff tape (e.g. backward called twice)."""


class TrainingError(PropencError, RuntimeError):
    """Training failed numerically; the message names the epoch."""
