"""Exception types shared across the package."""


class InvalidParameterError(ValueError):
    """A numeric parameter is outside its admissible range."""


class DimensionError(ValueError):
    """Array shapes are inconsistent with each other."""


class SingularSystemError(ValueError):
    """A least-squares system has no unique solution."""


class FramingError(ValueError):
    """Bit or symbol counts do not fit the requested frame layout."""


class UnsupportedConfigurationError(ValueError):
    """The requested scenario is outside what an algorithm supports."""


class DegenerateSolutionError(ValueError):
    """An optimizer output cannot be turned into a usable design."""


class LowSNRError(ValueError):
    """A measurement is too weak to support an estimate."""


class UndefinedSubspaceError(ValueError):
    """A measurement has numerical rank zero."""


class ScheduleError(RuntimeError):
    """A sounding schedule misses or repeats an atom."""


class ConfigError(ValueError):
    """A configuration file is malformed or holds unknown keys."""
