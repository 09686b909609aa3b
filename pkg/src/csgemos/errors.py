"""Exception hierarchy shared by all modules.

Every exception carries an ``exit_code`` so the CLI can map failures onto
its documented return codes without inspecting types one by one.
"""


class CsgEmosError(Exception):
    exit_code = 1
    code = "ERROR"


class ConfigError(CsgEmosError):
    exit_code = 2
    code = "CONFIG_ERROR"


class DataError(CsgEmosError):
    exit_code = 3
    code = "DATA_ERROR"


class NumericError(CsgEmosError):
    exit_code = 4
    code = "NUMERIC_ERROR"


class DomainError(NumericError, ValueError):
    code = "DOMAIN_ERROR"


class QuadratureFailure(NumericError):
    code = "QUADRATURE_FAILURE"


class ZeroReference(NumericError, ZeroDivisionError):
    code = "ZERO_REFERENCE"


class EmptyWindow(DataError):
    code = "EMPTY_WINDOW"


class InsufficientData(DataError):
    code = "INSUFFICIENT_DATA"


class InsufficientSeries(DataError):
    code = "INSUFFICIENT_SERIES"


class UnknownLocation(DataError, KeyError):
    code = "UNKNOWN_LOCATION"


class ArityError(DataError, ValueError):
    code = "ARITY_ERROR"


class InvalidMixture(ConfigError, ValueError):
    code = "INVALID_MIXTURE"
