"""Exception types shared across the package."""


class CbdselError(Exception):
    """Base class for all errors raised by this package."""


class PersistenceError(CbdselError):
    """A file could not be written or read."""


class FormatError(CbdselError):
    """An on-disk artifact violates its byte format or value invariants."""


class AlignmentError(CbdselError):
    """Parallel artifacts (names file vs. embedding rows) disagree on counts."""


class ShapeError(CbdselError):
    """Matrix dimensions do not match the operation's contract."""


class RankDeficiencyError(CbdselError):
    """A normal matrix is singular; a positive regularizer is required."""


class DegenerateVectorError(CbdselError):
    """A zero-norm vector entered a cosine or normalization step."""


class UndefinedDiversityError(CbdselError):
    """Diversity was requested for an empty subset or empty assignment."""


class AccountingError(CbdselError):
    """A histogram removal does not match prior additions."""


class InsufficientClassesError(CbdselError):
    """Fewer than two classes are available."""


class ConfigurationError(CbdselError):
    """Invalid metric or pipeline configuration."""


class BudgetError(CbdselError):
    """The selection budget is not satisfiable by the candidate pool."""


class PlanError(CbdselError):
    """A controlled-subset plan is infeasible for the given labels."""


class DegenerateCorrelationError(CbdselError):
    """Rank correlation is undefined because one input has zero rank variance."""


class DegenerateDenominatorError(CbdselError):
    """A normalization denominator is exactly zero."""


class DegenerateTargetError(CbdselError):
    """Target variance is zero while residuals are not."""


class InvariantError(CbdselError):
    """An in-memory object violates its type invariants."""
