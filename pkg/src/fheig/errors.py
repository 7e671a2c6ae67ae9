"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Bad input: parameters, configuration or weight data."""


class ConvergenceError(RuntimeError):
    """An iterative solve or quadrature did not reach its tolerance."""


class VerificationError(RuntimeError):
    """A theorem-level verification check failed."""
