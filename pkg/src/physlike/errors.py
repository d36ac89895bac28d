"""Exception types shared across the package."""


class PhyslikeError(Exception):
    """Base class for all package errors."""


class InvalidArgument(PhyslikeError, ValueError):
    pass


class UnreachableError(PhyslikeError):
    """No delta-chain joins the requested boxes in the transition graph."""


class NoShadowError(PhyslikeError):
    """A pseudo-orbit could not be shadowed (it was not a valid delta-chain)."""


class InternalInconsistency(PhyslikeError, RuntimeError):
    pass


class UnsupportedSystem(PhyslikeError):
    """The system has no constructive shadowing available."""


class ResourceLimit(PhyslikeError):
    pass


class BudgetFailure(PhyslikeError):
    """An epsilon/5 budget condition could not be met within the N cap."""

    def __init__(self, term, message):
        super().__init__(message)
        self.term = term
