"""
Exception types raised by the simulation toolkit.
"""


class ImposterSimError(Exception):
    """Base class for every error raised by imposter_sim."""


class DomainError(ImposterSimError, ValueError):
    """A code, value or variable id lies outside its declared domain."""


class ArgumentError(ImposterSimError, ValueError):
    """An operation received an argument violating its precondition."""


class UndefinedPosteriorError(ImposterSimError, ArithmeticError):
    """Every candidate has zero likelihood, so no posterior exists."""


class SerializationError(ImposterSimError, ValueError):
    """A tag value is missing or cannot be encoded into its slot."""


class CapacityError(ImposterSimError, ValueError):
    """The tag table does not fit into the configured pages."""


class DuplicateVpsError(ImposterSimError, KeyError):
    """A VPS id was registered twice."""


class UnmappedPageError(ImposterSimError, KeyError):
    """A page or frame is not mapped."""


class InfeasiblePlacementError(ImposterSimError, RuntimeError):
    """No profiled cell matches the requested tag bit and direction."""


class ConfigError(ImposterSimError, ValueError):
    """The scenario configuration is invalid or unreadable."""
