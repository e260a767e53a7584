"""Exception types raised across the package."""


class GniesError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(GniesError, ValueError):
    pass


class NoConsistentExtension(GniesError):
    """A PDAG admits no DAG extension without new v-structures or cycles."""


class PreconditionViolated(GniesError):
    pass


class InvalidClassRepresentation(GniesError):
    pass


class EnumerationOverflow(GniesError):
    """Class enumeration exceeded its member limit."""


class SingularSystem(GniesError, ArithmeticError):
    """A normal-equation system stayed singular after the ridge guard."""


class NonConvergenceWarning(UserWarning):
    pass
