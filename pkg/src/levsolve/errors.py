"""Exception taxonomy shared across the library.

The CLI maps these onto exit codes: argument/configuration problems exit 2,
numeric and convergence failures exit 3, verify-mode invariant violations
exit 4.
"""


class ConfigurationError(ValueError):
    """A required setting (flag, bound, hint) is missing or inconsistent."""


class NumericError(ArithmeticError):
    """A computation produced a non-finite or impossible value."""

    def __init__(self, message, index=None):
        self.index = index
        if index is not None:
            message = f"{message} (coordinate {index})"
        super().__init__(message)


class ConvergenceError(RuntimeError):
    """A solver exhausted its budget without certifying its target.

    Retryable: carries the best iterate found so far.
    """

    def __init__(self, message, best=None):
        self.best = best
        super().__init__(message)


class SamplingFailureError(RuntimeError):
    """Row sampling kept failing its acceptance test (signals bad overestimates)."""


class PreconditionerQualityError(RuntimeError):
    """The preconditioned outer iteration diverged (spectral sandwich violated)."""


class DegenerateProblemError(ValueError):
    """The problem has no usable structure (e.g. all-zero sampling weights)."""


class InvariantViolation(AssertionError):
    """A verify-mode bracket failed; names the invariant and the row index."""

    def __init__(self, invariant, detail, index=None):
        self.invariant = invariant
        self.index = index
        loc = f" at row {index}" if index is not None else ""
        super().__init__(f"invariant '{invariant}' violated{loc}: {detail}")
