"""Exception hierarchy shared by the library and the CLI."""


class CdoLdError(Exception):
    """Base class for all package errors."""


class AssumptionError(CdoLdError, ValueError):
    """A standing pool assumption (investment grade, non-degeneracy, ...) fails.

    ``assumption`` names the violated condition; ``details`` carries the
    offending quantities so callers can print them.
    """

    def __init__(self, assumption, message, **details):
        super().__init__(message)
        self.assumption = assumption
        self.details = details


class InfeasibleError(AssumptionError):
    """The tilted-mean constraint cannot be met for the requested attachment."""

    def __init__(self, message, **details):
        super().__init__("feasibility", message, **details)


class ConvergenceError(CdoLdError, RuntimeError):
    """A numerical routine failed to reach its tolerance."""


class ConfigError(CdoLdError, ValueError):
    """A configuration document is malformed or fails schema validation."""
