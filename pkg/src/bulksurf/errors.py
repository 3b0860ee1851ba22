"""Exception hierarchy shared by the solvers."""


class BulkSurfError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(BulkSurfError, ValueError):
    pass


class NotPositiveDefinite(BulkSurfError):
    pass


class ShiftNotBelowSpectrum(BulkSurfError):
    pass


class ConvergenceFailure(BulkSurfError):
    pass


class NoRootInBracket(BulkSurfError):
    """No sign change of the shooting residual was found.

    ``endpoints`` holds ``(lam, residual)`` pairs at the bracket ends.
    """

    def __init__(self, message, endpoints=()):
        super().__init__(message)
        self.endpoints = tuple(endpoints)


class PositivityViolated(BulkSurfError):
    pass


class AssertionBreach(BulkSurfError):
    """A structural property expected of the eigencouple failed to hold."""


class BracketFailure(BulkSurfError):
    pass


class ResonantBoundary(BulkSurfError):
    pass


class NegativeInput(BulkSurfError, ValueError):
    pass


class GridMismatch(BulkSurfError, ValueError):
    pass


class SingularMode(BulkSurfError):
    pass


class PotentialTooLarge(BulkSurfError):
    pass


class SurfaceOperatorSingular(BulkSurfError):
    pass


class MeshQualityFailure(BulkSurfError):
    pass


class MeshFormatError(BulkSurfError, ValueError):
    pass


class ConfigError(BulkSurfError):
    """Invalid run configuration; ``key`` names the offending entry."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class UnknownKey(ConfigError, KeyError):
    def __str__(self):
        return self.args[0]


class MissingKey(ConfigError, KeyError):
    def __str__(self):
        return self.args[0]


class ConfigTypeError(ConfigError, TypeError):
    pass
