"""Exception types raised across the package."""


class EmLaplaceError(Exception):
    """Base class for all package errors."""


class DimensionError(EmLaplaceError, ValueError):
    pass


class NonFiniteError(EmLaplaceError, ArithmeticError):
    """A computed vector contained NaN or inf.

    ``index`` is the first offending component.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DomainError(EmLaplaceError, ValueError):
    """log or sqrt applied to a non-positive value part."""


class EStepError(EmLaplaceError, ArithmeticError):
    """The normalizer of a record's hidden posterior underflowed to zero."""

    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record


class MStepError(EmLaplaceError, ArithmeticError):
    pass


class EmFitError(EmLaplaceError):
    """An EM iteration failed; ``trace`` holds the iterates completed so far."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class AsymmetryError(EmLaplaceError):
    """Assembled Hessian columns disagree with their transposes beyond noise."""


class NotAtModeError(EmLaplaceError):
    pass


class NotPositiveDefiniteError(EmLaplaceError):
    """-Lambda failed a Cholesky factorization at pivot ``pivot`` (0-based)."""

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class QuadratureError(EmLaplaceError):
    pass
