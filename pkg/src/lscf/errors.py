"""Exception hierarchy shared by every solver module."""


class LscfError(Exception):
    """Base class for all errors raised by :mod:`lscf`."""


class NonAlignedGrid(LscfError, ValueError):
    pass


class BadDimension(LscfError, ValueError):
    pass


class BadParam(LscfError, ValueError):
    pass


class GridMismatch(LscfError, ValueError):
    pass


class NonNeutralSource(LscfError, ValueError):
    """Poisson source with nonzero mean (net charge on a periodic cell)."""


class DegeneratePotential(LscfError, ValueError):
    pass


class NonPositivePotential(LscfError, ValueError):
    pass


class TooLarge(LscfError, ValueError):
    pass


class BadOccupation(LscfError, ValueError):
    pass


class BoundaryTouch(LscfError, ValueError):
    pass


class QuadratureFailure(LscfError, ArithmeticError):
    pass


class NoBracket(LscfError, ArithmeticError):
    pass


class NoConvergence(LscfError, RuntimeError):
    """Iterative solver hit its iteration cap.

    ``history`` carries whatever per-iteration diagnostics the solver kept.
    """

    def __init__(self, message, history=None, state=None):
        super().__init__(message)
        self.history = list(history or [])
        self.state = state
