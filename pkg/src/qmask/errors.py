"""Exception hierarchy shared by the simulator, the classical routines and the CLI."""


class MaskingError(Exception):
    """Base class for every error raised by qmask."""


class InvalidModulusError(MaskingError, ValueError):
    pass


class InvalidSupportError(MaskingError, ValueError):
    pass


class RegisterNotFreshError(MaskingError, ValueError):
    pass


class UnknownRegisterError(MaskingError, KeyError):
    pass


class NonReversibleMapError(MaskingError, ValueError):
    pass


class OverlappingRegisterError(MaskingError, ValueError):
    pass


class DiscardEntangledError(MaskingError, ValueError):
    def __init__(self, label, residual):
        super().__init__(
            f"register {label!r} is entangled with the rest of the state "
            f"(factorization residual {residual:.3e})"
        )
        self.residual = residual


class LayoutMismatchError(MaskingError, ValueError):
    pass


class NormalizationError(MaskingError, ArithmeticError):
    pass


class NotAUnitError(MaskingError, ValueError):
    def __init__(self, a, n, gcd):
        super().__init__(f"{a} is not a unit mod {n} (gcd {gcd})")
        self.gcd = gcd


class NonResidueError(MaskingError, ValueError):
    pass


class ExponentNotInvertibleError(MaskingError, ValueError):
    pass


class SingularMatrixError(MaskingError, ValueError):
    def __init__(self, rank, size):
        super().__init__(f"matrix is singular (rank {rank} < {size})")
        self.rank = rank


class DivisionByZeroError(MaskingError, ZeroDivisionError):
    pass


class DomainTooLargeError(MaskingError, ValueError):
    pass


class NotPrimeError(MaskingError, ValueError):
    pass


class BadFactorizationError(MaskingError, ValueError):
    pass


class GroupLawError(MaskingError, ValueError):
    pass


class HomomorphismError(MaskingError, ValueError):
    pass


class UnsupportedInputError(MaskingError, ValueError):
    pass


class InvalidDivisorError(MaskingError, ValueError):
    pass
