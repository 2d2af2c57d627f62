"""Exception hierarchy shared by all kite modules."""


class KiteError(Exception):
    """Base class for every error raised by kite."""


class InvalidInput(KiteError, ValueError):
    """Input is malformed (non-finite entries, wrong type, bad parameter)."""


class ShapeError(KiteError, ValueError):
    """Operand dimensions do not match."""


class DomainError(KiteError, ValueError):
    """A function was evaluated outside of its domain."""


class NotPSD(KiteError, ValueError):
    """A matrix that must be positive semi-definite has a negative eigenvalue."""


class IllConditioned(KiteError, ArithmeticError):
    """A linear system or integral is numerically singular."""


class Diverged(KiteError, ArithmeticError):
    """An iterative solver produced a non-finite objective."""
