"""Error types raised by the numerical stack."""


class ChartDomainError(ValueError):
    """A point violates the chart domain (outside box or inside a singular margin)."""


class StencilError(ValueError):
    """A finite-difference stencil cannot be placed inside the chart band."""


class NotPositiveDefiniteError(ValueError):
    """A metric failed positive definiteness at a quadrature node or path point."""


class PreconditionError(ValueError):
    """A structural precondition (flag, residual threshold) was violated."""
