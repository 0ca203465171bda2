"""Exception types shared across the package.

The CLI maps these onto exit codes: config/contract/shape/format problems
exit with 1, verification failures with 2.
"""


class DimensionError(ValueError):
    """Tensor shapes are incompatible for the requested operation."""


class ConfigError(ValueError):
    """A configuration value violates a documented constraint."""


class ContractError(ValueError):
    """A precondition of an operation was violated by the caller."""


class FormatError(ValueError):
    """An on-disk artifact (dataset file, checkpoint) is malformed."""


class NumericError(ArithmeticError):
    """Non-finite values reached an operation that requires finite input."""
