"""Exception types shared across the package.

Errors that stem from bad input data derive from :class:`DataError` so the
command line can map them to a single exit code; :class:`Infeasible` is kept
separate because an over-constrained matching design is not a data problem.
"""


class AcDesignError(Exception):
    """Base class for all package errors."""


class DataError(AcDesignError):
    """Input data violates a precondition."""


class IoError(DataError):
    pass


class MissingColumn(DataError):
    pass


class ParseError(DataError):
    def __init__(self, row, col, value=None):
        self.row = row
        self.col = col
        self.value = value
        msg = f"cannot parse row {row}, column {col!r}"
        if value is not None:
            msg += f": {value!r}"
        super().__init__(msg)


class BadAssignment(DataError):
    pass


class LatentAccessError(AcDesignError):
    """A latent (simulation-only) column was read outside an oracle context."""


class InvalidConfig(DataError):
    pass


class NoControls(DataError):
    pass


class NoTreated(DataError):
    pass


class BadFraction(DataError):
    pass


class NoVariation(DataError):
    pass


class EmptyPilot(DataError):
    pass


class MissingOutcome(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class SingularCovariance(DataError):
    pass


class MissingInstrument(DataError):
    pass


class TooFewUnits(DataError):
    pass


class EmptyGroup(DataError):
    pass


class MissingTruth(DataError):
    pass


class MissingMatching(DataError):
    pass


class MismatchedUnits(DataError):
    pass


class Infeasible(AcDesignError):
    """No matching satisfies the requested design."""


class SeparationWarning(UserWarning):
    """Logistic fit diverged because the classes are (quasi-)separable."""
