"""Exception vocabulary shared across the laboratory modules."""


class DomainError(ValueError):
    """A point lies outside the domain mask of a field or diffusion."""


class NumericError(ArithmeticError):
    """A non-finite value appeared where a finite one is required."""


class PreconditionError(ValueError):
    """An operation's precondition fails (support, positivity, branch, ...)."""


class UsageError(ValueError):
    """Bad user input: unknown names, excluded parameter values, bad config."""


class DegenerateInputError(ValueError):
    """All data was filtered away (empty mask, all points skipped, ...)."""
