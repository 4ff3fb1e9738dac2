"""Exception hierarchy.

Each class carries an ``exit_code`` so the command line can map failures to
a category without inspecting messages.
"""


class TsvForgeError(Exception):
    exit_code = 1


class ContractViolation(TsvForgeError, ValueError):
    """A documented precondition was not met."""

    exit_code = 2


class DimensionError(ContractViolation):
    exit_code = 3


class ConfigurationError(ContractViolation):
    exit_code = 4


class DataError(TsvForgeError, ValueError):
    """Malformed or unusable input data."""

    exit_code = 5


class EmptyDatasetError(DataError):
    exit_code = 5


class DivergenceError(TsvForgeError, ArithmeticError):
    """Training produced a non-finite loss."""

    exit_code = 6


class NumericError(TsvForgeError, ArithmeticError):
    exit_code = 7
