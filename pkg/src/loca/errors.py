"""Exception hierarchy shared by every module.

Each class carries the process exit code the CLI maps it to.
"""


class LocaError(Exception):
    exit_code = 1


class ConfigError(LocaError, ValueError):
    exit_code = 2


class ShapeError(ConfigError):
    pass


class DataError(LocaError, ValueError):
    exit_code = 3


class NumericError(LocaError, ArithmeticError):
    """Non-finite values or a diverged computation."""

    exit_code = 4


class MetricUndefined(DataError):
    pass
