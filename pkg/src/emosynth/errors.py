"""Exception types shared across the engine.

The CLI maps these onto exit codes: ``InputError`` -> 1, ``NumericsError`` -> 2.
"""


class EmosynthError(Exception):
    """Base class for all engine errors."""


class InputError(EmosynthError):
    """Invalid argument, malformed file, or violated precondition."""


class NumericsError(EmosynthError):
    """Numerical failure: divergence, non-finite values, failed convergence."""
