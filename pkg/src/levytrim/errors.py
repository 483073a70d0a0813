"""Exception hierarchy shared by all levytrim modules."""

from __future__ import annotations


class LevyTrimError(Exception):
    """Base class for every error raised by levytrim."""


class ConfigError(LevyTrimError, ValueError):
    """Invalid user configuration: unknown names, bad parameters, short grids."""


class NumericFailure(LevyTrimError, ArithmeticError):
    """A numerical routine did not converge or produced an impossible value.

    Parameters
    ----------
    message : str
        Human readable description.
    bracket : tuple of float, optional
        Last bracket (or bracket values) seen by the failing routine.
    """

    def __init__(self, message: str, bracket: tuple | None = None):
        if bracket is not None:
            message = f"{message} (bracket={bracket})"
        super().__init__(message)
        self.bracket = bracket


class UnsupportedMeasureError(LevyTrimError):
    """The measure lacks both a density and a closed form for a needed integral."""


class ResolutionError(LevyTrimError):
    """The requested jump resolution exceeds the configured count budget."""


class InsufficientResolutionError(LevyTrimError):
    """Fewer resolved jumps than the trimming order on some side."""


class ContractError(LevyTrimError):
    """An operation was asked to trim a side with finitely many jumps."""


class InconsistentMeasureError(LevyTrimError):
    """Tail mass is present where the truncated second moment vanishes."""


class ConstructionError(LevyTrimError):
    """A norming function could not be constructed on the search bracket.

    Parameters
    ----------
    message : str
        Description of the failure.
    bracket_values : tuple, optional
        Values of the defining function at the bracket ends.
    """

    def __init__(self, message: str, bracket_values: tuple | None = None):
        if bracket_values is not None:
            message = f"{message} (bracket values={bracket_values})"
        super().__init__(message)
        self.bracket_values = bracket_values
