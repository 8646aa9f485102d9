"""Exception hierarchy shared by every module of the package."""


class FinslerError(Exception):
    """Base class for all errors raised by sphfinsler."""


class JetError(FinslerError, ArithmeticError):
    pass


class DivisionNearZero(JetError):
    pass


class SqrtNonPositive(JetError):
    pass


class OrderOutOfRange(JetError, IndexError):
    pass


class BaseMismatch(JetError, ValueError):
    pass


class MaxDepthExceeded(FinslerError):
    """Adaptive quadrature could not reach the requested tolerance."""


class SingularFrame(FinslerError):
    """The frame lies on (or too close to) the singular set of the metric."""


class IntegrandSingularOnPath(SingularFrame):
    """The phi integral from s = 0 to the requested s crosses a denominator zero."""


class ZeroVector(FinslerError, ValueError):
    pass


class StencilCrossesSingularSet(SingularFrame):
    pass


class ParseError(FinslerError, ValueError):
    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class ValidationError(FinslerError, ValueError):
    pass


class EmptyGridAfterGuards(FinslerError):
    pass
