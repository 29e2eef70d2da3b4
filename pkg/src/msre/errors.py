"""Exception hierarchy. Every error raised on purpose derives from MsreError."""


class MsreError(Exception):
    pass


class ParameterError(MsreError, ValueError):
    pass


class SamplerError(MsreError):
    pass


class CapacityError(MsreError):
    pass


class AlignmentError(MsreError):
    pass


class PaddingError(MsreError):
    pass


class DomainMismatchError(MsreError):
    pass


class BoundaryMismatchError(MsreError):
    pass


class OffGridError(MsreError):
    pass


class SolverError(MsreError):
    pass


class ConvergenceError(SolverError):
    pass


class ConstructionError(MsreError):
    pass


class InsufficientDataError(MsreError):
    pass


class FitError(MsreError):
    pass


class ConfigError(MsreError):
    pass
