"""Exception types shared across the package.

The CLI maps each family onto an exit code: usage/config/parameter problems
exit 1, malformed data exits 2, numeric failures exit 3.
"""


class CrossretError(Exception):
    exit_code = 2


class DimensionError(CrossretError, ValueError):
    """Array extents are inconsistent with an operation."""


class ParameterError(CrossretError, ValueError):
    exit_code = 1


class ConfigError(CrossretError, ValueError):
    exit_code = 1


class ParseError(CrossretError, ValueError):
    pass


class DataError(CrossretError, ValueError):
    pass


class NumericError(CrossretError, ArithmeticError):
    exit_code = 3


class StateError(CrossretError, RuntimeError):
    pass
