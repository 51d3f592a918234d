"""Exception hierarchy shared by all modules."""


class OttdError(Exception):
    """Base class for library errors."""


class InvalidInputError(OttdError, ValueError):
    pass


class ShapeError(InvalidInputError):
    pass


class SingularSystemError(OttdError):
    pass


class NonexistenceError(OttdError):
    """A requested fixed point does not exist (singular system or non-contracting map)."""


class DegenerateModelError(OttdError):
    pass


class MultiplicityError(OttdError):
    """Markov chain has no unique stationary distribution."""


class CoverageError(OttdError):
    """Behaviour policy assigns zero probability to an observed next action."""


class PreconditionError(OttdError):
    pass


class SchemaError(OttdError):
    pass


class ConditionWarning(UserWarning):
    """A convergence condition required by a closed-form solver does not hold."""
