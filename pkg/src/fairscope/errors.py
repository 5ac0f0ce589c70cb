"""Exception hierarchy. The CLI maps each family to an exit code."""


class FairscopeError(Exception):
    exit_code = 1


class ConfigError(FairscopeError, ValueError):
    exit_code = 2


class DataError(FairscopeError, ValueError):
    exit_code = 3


class CapExceededError(FairscopeError, ValueError):
    """Raised when exact Shapley enumeration would exceed the player cap."""

    exit_code = 4


class SupportTooWideError(FairscopeError, ValueError):
    exit_code = 3
