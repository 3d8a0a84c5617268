"""Exception hierarchy shared by all modules.

Every error raised on purpose by the package derives from
:class:`ManifoldNSError`; the CLI maps the subclasses onto exit codes.
"""


class ManifoldNSError(Exception):
    """Base class for package errors."""


class ConfigurationError(ManifoldNSError, ValueError):
    """Invalid parameters or configuration (CLI exit code 2)."""


class DomainError(ManifoldNSError, ValueError):
    """Argument outside the domain of an operator."""


class DimensionError(ManifoldNSError, ValueError):
    """Harmonic-sector dimension mismatch (e.g. harmonic data on the sphere)."""


class AssemblyError(ManifoldNSError, RuntimeError):
    """Triad tensor does not cover the modes of the state being evolved."""


class InsufficientDataError(ManifoldNSError, ValueError):
    """Too few (or degenerate) points for a fit."""


class BlowUpError(ManifoldNSError, FloatingPointError):
    """Non-finite or overflowing coefficients during time stepping.

    ``record`` holds the last diagnostics, ``trajectory`` the partial
    trajectory collected before the failure (when raised from ``run``).
    """

    def __init__(self, message, record=None, trajectory=None, state=None):
        super().__init__(message)
        self.record = record
        self.trajectory = trajectory if trajectory is not None else []
        self.state = state
