"""Exception hierarchy shared by all modules."""


class StochRBError(Exception):
    """Base class for all package errors."""


class ConfigurationError(StochRBError, ValueError):
    """Invalid input or configuration."""


class SolverError(StochRBError, RuntimeError):
    """A linear solver or eigensolver failed."""


class CoercivityError(SolverError):
    """Coercivity lost: a computed coercivity factor is not positive."""


class ArtifactError(StochRBError):
    """Offline artifact cannot be read or fails integrity checks."""
