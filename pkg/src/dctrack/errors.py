"""Exception and warning types shared across the engine."""


class DCTrackError(Exception):
    """Base class for engine errors."""


class ShapeError(DCTrackError, ValueError):
    pass


class InvalidBoxError(DCTrackError, ValueError):
    pass


class ConfigError(DCTrackError, ValueError):
    pass


class StateError(DCTrackError, RuntimeError):
    pass


class GenerationError(DCTrackError, RuntimeError):
    pass


class InputError(DCTrackError, ValueError):
    """Missing, corrupt or inconsistent input files."""


class NumericalWarning(UserWarning):
    """A value was clamped or repaired to stay finite / well-posed."""
