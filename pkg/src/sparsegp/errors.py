"""Exception taxonomy shared across the package.

The command-line interface maps these onto its exit codes: configuration
problems exit with 2, data validation problems with 3, and numerical
failures with 4.
"""


class SparseGPError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(SparseGPError):
    """Invalid configuration: unknown keys, bad types, out-of-range values."""


class DataValidationError(SparseGPError):
    """Input data that cannot be used: non-numeric fields, shape mismatches."""


class NumericalError(SparseGPError):
    """Numerical failure: indefinite matrices, non-finite kernel values,
    solver breakdown."""
