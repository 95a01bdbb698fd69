"""Exception hierarchy shared across the package."""


class GuidanceError(Exception):
    """Base class for all package errors."""


class InputError(GuidanceError):
    """Caller supplied malformed or out-of-range input."""


class StructuralError(GuidanceError):
    """An automaton violates the structural precondition of an operation."""


class UnsatisfiableConstraintError(GuidanceError):
    """No sequence within the horizon can satisfy the constraint."""


class SessionExhaustedError(GuidanceError):
    """A generation session was asked to step past its horizon."""


class DeadEndError(GuidanceError):
    """No candidate token keeps an accepting completion reachable."""


class BudgetExceededError(GuidanceError):
    """An exhaustive-enumeration request exceeds the configured budget."""


class InvariantError(GuidanceError):
    """An internal invariant was violated; indicates a bug."""
