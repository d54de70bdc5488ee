"""Exception hierarchy shared by all modules."""


class ConeWittenError(Exception):
    """Base class."""


class InvalidParameterError(ConeWittenError, ValueError):
    pass


class ModelInconsistencyError(ConeWittenError):
    pass


class AssemblyError(ConeWittenError):
    pass


class NumericalFailureError(ConeWittenError):
    """Eigensolver non-convergence or a failed internal consistency check."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


class UnsupportedOracleError(ConeWittenError):
    pass


class DegenerateFitError(ConeWittenError):
    pass


class TruncationInsufficientError(ConeWittenError):
    pass


class ConfigError(ConeWittenError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
