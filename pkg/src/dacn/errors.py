"""Exception types shared across the package.

The service layer maps these onto HTTP status codes (and the CLI onto
exit codes), so raising the right class matters:

* ConfigError / ContractError -> 422 -> exit code 2 (usage/config)
* DimensionError / FormatError and anything else -> 400/500 -> exit code 1
"""


class DacnError(Exception):
    """Base class for all package errors."""


class DimensionError(DacnError):
    """Operands or files have incompatible shapes."""


class ContractError(DacnError):
    """A documented precondition was violated by the caller."""


class ConfigError(DacnError):
    """Invalid configuration value or command usage."""


class FormatError(DacnError):
    """Malformed, truncated, or unrecognized file content."""
