"""Exception types shared across the toolkit."""


class PhotonThreshError(Exception):
    """Base class for toolkit errors."""


class DomainError(PhotonThreshError, ValueError):
    """An argument is outside the mathematical domain of an operation."""


class ConfigError(PhotonThreshError, ValueError):
    """A configuration object or file is invalid or incomplete."""


class NumericalError(PhotonThreshError, RuntimeError):
    """A numerical routine failed to converge or cross-check.

    Carries a ``diagnostics`` dict so callers can report what was tried.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
