"""Exception types shared across the library."""


class InvalidArgumentError(ValueError):
    """An input violates a documented precondition."""


class NumericalDomainError(ArithmeticError):
    """A quantity left its mathematical domain (e.g. log of a non-positive sum)."""


class GroupMissingError(InvalidArgumentError):
    """A required sensitive group is absent from the batch."""
