"""Exception hierarchy shared by the solver modules and the CLI."""


class CemError(Exception):
    """Base class for all errors raised by :mod:`cemwave`."""


class ConfigurationError(CemError, ValueError):
    """Inconsistent grid sizes, counts or experiment settings."""


class DomainError(CemError, ValueError):
    """Input data outside the admissible range (e.g. nonpositive coefficients)."""


class SingularSystemError(CemError, ArithmeticError):
    """A linear system that should be nonsingular could not be solved."""


class RankDeficiencyError(SingularSystemError):
    """A Gram or mass matrix is not positive definite."""


class DivergenceError(CemError, ArithmeticError):
    """Time stepping produced non-finite values."""


class FieldFormatError(CemError, OSError):
    """Malformed field file."""
