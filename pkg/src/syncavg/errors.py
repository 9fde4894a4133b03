"""Exception hierarchy shared by all modules."""


class SyncAvgError(Exception):
    """Base class for package errors."""


class DomainError(SyncAvgError, ValueError):
    """A point, symbol or integer argument lies outside its domain."""


class InvalidShiftError(DomainError):
    """Negative shift requested on a one-sided base."""


class InvalidBaseError(SyncAvgError, ValueError):
    """Operation needs a base of another kind (e.g. invertible)."""


class InvalidInputError(SyncAvgError, ValueError):
    """Malformed system or measure definition."""


class ScenarioPreconditionError(SyncAvgError):
    """A scenario hypothesis does not hold for the supplied system."""


class ConfigError(SyncAvgError, ValueError):
    """Scenario config failed validation.

    ``field`` names the offending config entry.
    """

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
