"""Exception types raised across the package."""


class DesignError(ValueError):
    """Invalid design, partition, or other domain object."""


class DegenerateAssignmentError(ValueError):
    """An estimator was asked to work on an all-treated/all-control arm."""


class PositivityError(ValueError):
    """A propensity sits at 0 or 1 where an inverse weight is required."""


class SingularDesignError(ValueError):
    """A design or covariate matrix is rank deficient."""


class EnumerationLimitError(ValueError):
    """An exhaustive routine was called beyond its hard size cap."""


class ParseError(ValueError):
    """A CSV input could not be parsed; the message carries file/row/column."""
