"""Exception taxonomy.

Three failure classes matter to callers: bad configuration, bad data
(including malformed files), and numerical breakdown. The CLI maps each
class to its own exit code.
"""


class DadlError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(DadlError):
    """Invalid hyperparameter, option, or CLI/config-file setting."""


class DataError(DadlError):
    """Input data violates a contract (shapes, signs, labels, splits)."""


class DataFormatError(DataError):
    """A dataset file could not be parsed."""


class ModelFormatError(DataError):
    """A model container file is not readable (magic, version, truncation)."""


class DegenerateGraphError(DataError):
    """A neighborhood graph has no usable structure (isolated vertices,
    negative edge weights)."""


class NumericalError(DadlError):
    """Numerical failure: deficient grams, infeasible points, non-finite
    objectives, singular systems."""
