"""Error taxonomy shared across the package.

The CLI maps these onto exit codes: usage problems exit 1, data and
config problems exit 2, numeric failures exit 3.
"""


class Seq2GridError(Exception):
    """Base class for package-specific errors."""


class DimensionError(Seq2GridError):
    """Operand shapes are inconsistent with the operation's contract."""


class ParameterError(Seq2GridError):
    """An argument value is outside the operation's domain."""


class NumericError(Seq2GridError):
    """A computation produced or received non-finite values."""


class CapacityError(Seq2GridError):
    """A target does not fit into the configured grid width."""


class ParseError(Seq2GridError):
    """Malformed task text; carries file/line position where known."""


class ConfigError(Seq2GridError):
    """Invalid or inconsistent run configuration."""


class StateError(Seq2GridError):
    """Optimizer or checkpoint state is missing or inconsistent."""


class TokenizationError(Seq2GridError):
    """An input token does not exist in the model vocabulary."""
