"""
Exception hierarchy shared by every package.

main.py maps ConfigError to exit code 2. NumericalError and DimensionError map to
exit code 3; loaders turn shape problems in input files into ConfigError.
"""


class AbcError(Exception):
    """Base class for all library errors."""


class ConfigError(AbcError):
    """Invalid or incomplete experiment configuration / input files."""


class NumericalError(AbcError):
    """A computation could not produce a usable number."""


class SimulationError(NumericalError):
    """A simulator kept failing after its retry budget."""


class DimensionError(AbcError, ValueError):
    """Array shapes or index sets that do not fit together."""
