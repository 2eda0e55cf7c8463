"""Exception types shared across the package."""


class DataError(ValueError):
    """Malformed or inconsistent input data (bad files, shape mismatches)."""


class ConfigError(ValueError):
    """Invalid or unknown configuration values."""


class NumericalError(ArithmeticError):
    """Non-finite values or a linear solve that failed after jitter escalation."""
