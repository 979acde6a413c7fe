"""Exception hierarchy shared by every solver."""


class FinitaError(Exception):
    """Base class for all library errors."""


class NegativeMass(FinitaError, ValueError):
    pass


class NotNormalized(FinitaError, ValueError):
    pass


class IndexOutOfRange(FinitaError, IndexError):
    pass


class SizeMismatch(FinitaError, ValueError):
    pass


class NotBijective(FinitaError, ValueError):
    pass


class UnsupportedAlphabet(FinitaError, ValueError):
    pass


class ParameterOutOfRange(FinitaError, ValueError):
    pass


class NotDecomposable(FinitaError):
    """The joint is not a word permutation of any product distribution."""


class DegenerateParameter(NotDecomposable):
    pass


class NotDownClosed(FinitaError, ValueError):
    pass


class LimitExceeded(FinitaError):
    """A search cap was hit; ``result`` holds the best incumbent found."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class NoFeasiblePlacement(FinitaError):
    pass


class WorkCapExceeded(FinitaError):
    pass


class Singular(FinitaError, ValueError):
    pass


class InfeasibleConfig(FinitaError, ValueError):
    pass


class BadLength(FinitaError, ValueError):
    pass


class DivisibilityError(FinitaError, ValueError):
    pass


class EmptyBlock(FinitaError, ValueError):
    pass


class RegimeViolation(FinitaError, ValueError):
    pass
