"""Semantic exception hierarchy.

Public functions raise these instead of bare ValueError so callers can
distinguish "you fed me a bad point" from "the algorithm gave up" from
"the solution family genuinely ends here".
"""


class BuchdahlError(Exception):
    """Base error for this package."""


class DomainViolation(BuchdahlError, ValueError):
    """Evaluation point lies outside a coefficient function's window."""


class SingularState(BuchdahlError, ValueError):
    """State hits a structural singularity (y = 0, q = 0, mu = 0)."""


class BracketFailure(BuchdahlError):
    """Root bracket does not straddle the target value."""


class ConvergenceFailure(BuchdahlError):
    """Iterative solver exhausted its budget without meeting tolerance."""


class QuadratureFailure(BuchdahlError):
    """Adaptive quadrature could not reach the requested tolerance."""


class InsufficientSamples(BuchdahlError, ValueError):
    """Too few trajectory samples for the requested stencil."""


class DeformationBlowup(BuchdahlError):
    """Deformed solution left its validity window (log argument <= 0).

    ``critical_time`` carries an estimate of the boundary time when one
    could be computed, else ``None``.
    """

    def __init__(self, message, critical_time=None):
        super().__init__(message)
        self.critical_time = critical_time
