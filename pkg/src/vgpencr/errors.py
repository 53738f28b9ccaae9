"""Exception hierarchy shared by every module."""


class VGPenCRError(Exception):
    """Base class for all package errors."""


class SizeMismatchError(VGPenCRError, ValueError):
    pass


class EmptyGroupError(VGPenCRError, ValueError):
    pass


class LengthMismatchError(VGPenCRError, ValueError):
    pass


class NumericalFailure(VGPenCRError, ArithmeticError):
    """A factorization broke down (matrix not positive definite)."""


class DivergenceDetected(VGPenCRError, ArithmeticError):
    """The ELBO decreased across a CAVI cycle beyond round-off."""


class NegativeLambdaError(VGPenCRError, ValueError):
    pass


class FoldTooSmallError(VGPenCRError, ValueError):
    pass


class DegenerateInputError(VGPenCRError, ValueError):
    pass


class OutOfDomainError(VGPenCRError, ValueError):
    pass


class EmptyObservationError(VGPenCRError, ValueError):
    pass


class GTooSmallError(VGPenCRError, ValueError):
    pass


class KTooSmallError(VGPenCRError, ValueError):
    pass


class IndexOutOfRangeError(VGPenCRError, ValueError):
    pass


class EmptyInputError(VGPenCRError, ValueError):
    pass


class NotConvergedWarning(UserWarning):
    """An iterative routine hit its iteration cap; the best iterate is returned."""


class MaxCyclesWarning(NotConvergedWarning):
    pass
