"""Exception hierarchy shared by all swexp modules."""


class SwexpError(Exception):
    """Base class for all swexp errors."""


class SupportMismatch(SwexpError):
    """A distribution puts mass where the reference distribution has none."""


class DegenerateRow(SwexpError):
    """A mapping produced a conditional row whose normalizer is zero."""


class DegenerateColumn(SwexpError):
    """A lumping target column has mass but the source column sums to zero."""


class Infeasible(SwexpError):
    """The constraint set of an optimization problem is empty."""


class NotConverged(SwexpError):
    """An iterative solver hit its iteration cap before converging.

    Carries the partial result so callers can decide whether the best
    value found is still usable.
    """

    def __init__(self, message, result=None, delta=None):
        super().__init__(message)
        self.result = result
        self.delta = delta


class BracketFailure(SwexpError):
    """Bracket expansion exhausted its range without straddling the target."""


class TooLarge(SwexpError):
    """An enumeration or grid would exceed its configured size guard."""


class ValidationError(SwexpError):
    """Malformed external input (e.g. a source JSON file).

    ``path`` names the offending field, e.g. ``"pygx[1]"``.
    """

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path
