class EmpncaError(Exception):
    """Base class for all package errors."""


class InvalidDimensionError(EmpncaError, ValueError):
    pass


class InvalidGenomeError(EmpncaError, ValueError):
    pass


class ShapeMismatchError(EmpncaError, ValueError):
    pass


class InvalidHorizonError(EmpncaError, ValueError):
    pass


class UndefinedDistributionError(EmpncaError, ValueError):
    pass


class TargetError(EmpncaError, ValueError):
    pass


class TargetParseError(TargetError):
    pass


class TargetDimensionError(TargetError):
    pass


class EmptyTargetError(TargetError):
    pass


class SeedOutsideTargetError(TargetError):
    pass


class ConfigError(EmpncaError, ValueError):
    pass
