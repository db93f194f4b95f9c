"""Exception types shared across the package."""


class ClabError(Exception):
    """Base class for all package errors."""


class InvalidInputError(ClabError):
    """An argument is outside its documented domain."""


class InvalidStateError(ClabError):
    """A state vector violates its structural invariants."""


class InfiniteSupportError(ClabError):
    """The requested quantity is only defined for finitely supported states (needs p > 0)."""


class UnsupportedCaseError(ClabError):
    """The requested analytic quantity is undefined for these parameters."""


class TruncationError(ClabError):
    """The configured truncation dimension cannot hold the state."""


class NumericalBlowUpError(ClabError):
    """Integration produced non-finite values."""


class NonConvergenceError(ClabError):
    """An iterative procedure exhausted its horizon before reaching tolerance."""

    def __init__(self, message: str, final_distance: float):
        super().__init__(message)
        self.final_distance = final_distance
