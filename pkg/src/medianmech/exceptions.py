"""Exception types shared across the package."""


class MechanismError(Exception):
    """Base class for all library errors."""


class DimensionMismatchError(MechanismError):
    """Vector lengths disagree with the domain size."""


class ParamsInfeasibleError(MechanismError):
    """Paper-exact parameters violate the database-size bound."""


class EnumerationCapError(MechanismError):
    """The consistent set is too large to enumerate explicitly."""


class EmptyConsistentSetError(MechanismError):
    """An operation was asked to run over an empty consistent set."""


class DegeneratePolytopeError(MechanismError):
    """The consistent polytope is infeasible or has no interior."""


class SessionFailedError(MechanismError):
    """A query was submitted to a session that already reported failure."""


class RegimeError(MechanismError):
    """An exhaustive oracle was invoked outside its tractable regime."""
