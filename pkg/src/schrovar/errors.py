"""Exception hierarchy shared by every module."""


class SchrovarError(Exception):
    """Base class for all errors raised by the package."""


class InvalidArgument(SchrovarError, ValueError):
    pass


class OutOfDomain(SchrovarError, ValueError):
    """A point or ball falls outside the computational box."""


class DegenerateBall(SchrovarError, ValueError):
    """A ball contains no grid cell centers, or a mean divides by zero."""


class NumericalFailure(SchrovarError, RuntimeError):
    pass


class InvalidDiscretization(NumericalFailure):
    pass


class BoxTooSmall(NumericalFailure):
    """The critical-radius threshold is not reached inside the box."""


class UndefinedCriticalRadius(SchrovarError, ValueError):
    pass


class InvalidWeight(SchrovarError, ValueError):
    pass


class ConstraintViolation(InvalidArgument):
    """Parameters violate the hypotheses required in theorem mode."""
