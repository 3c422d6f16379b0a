"""Exception hierarchy shared by the package."""


class NgrcError(Exception):
    """Base class for every error raised by parallel_ngrc."""


class InvalidInputError(NgrcError, ValueError):
    """Arguments have the wrong shape, range or type."""


class DegenerateDataError(InvalidInputError):
    """Data carries no usable information (zero variance, zero-norm rows)."""


class InvalidWindowError(InvalidInputError):
    """A time window is empty, too short, or overlaps a forbidden region."""


class IncompatibilityError(InvalidInputError):
    """Two artifacts (weights, trajectory, config) disagree on a field."""

    def __init__(self, field, expected, found):
        self.field = field
        self.expected = expected
        self.found = found
        super().__init__(f"incompatible {field}: expected {expected!r}, found {found!r}")


class FormatError(NgrcError, ValueError):
    """A file on disk does not follow the expected binary layout."""


class NumericalBlowupError(NgrcError, ArithmeticError):
    """An integration produced non-finite or runaway values."""

    def __init__(self, message, step=None, time=None):
        self.step = step
        self.time = time
        where = []
        if step is not None:
            where.append(f"step {step}")
        if time is not None:
            where.append(f"t={time:.6g} MTU")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class RankDeficiencyError(NgrcError, ArithmeticError):
    """The normal matrix is singular; a positive ridge parameter is required."""


class ForecastDivergenceError(NgrcError, ArithmeticError):
    """A readout produced non-finite output."""
