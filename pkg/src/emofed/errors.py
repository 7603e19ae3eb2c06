"""Exception types shared across the package.

The CLI maps each class to a process exit code.
"""


class EmofedError(Exception):
    exit_code = 1


class ConfigError(EmofedError, ValueError):
    exit_code = 2


class DataError(EmofedError, ValueError):
    exit_code = 3


class NumericError(EmofedError, ArithmeticError):
    exit_code = 4
