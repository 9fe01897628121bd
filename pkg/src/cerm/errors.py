"""Exception hierarchy shared across the package."""


class CermError(Exception):
    """Base class for all package-specific failures."""


class RankDeficient(CermError):
    """No pivot subset of the constraint Jacobian is well conditioned."""


class NotOnManifold(CermError):
    """Chart base point does not satisfy the constraint to tolerance."""


class SingularPivotBlock(CermError):
    """The selected pivot submatrix of DF could not be factored."""


class NonConvergence(CermError):
    """Newton iteration failed to reach the requested residual."""

    def __init__(self, iterations: int, residual: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"no convergence after {iterations} iterations "
            f"(residual {residual:.3e})"
        )


class StepRejected(CermError):
    """Retraction failed even after exhausting the step-halving budget."""


class SingularMetric(CermError):
    """Metric solve failed; indicates a corrupted chart."""


class BadOrder(CermError):
    """Invalid two-sided sequence order."""


class OddLength(CermError):
    """Periodic transform input must have even length."""


class LengthMismatch(CermError):
    """Coefficient arrays have inconsistent lengths."""


class RangeEmpty(CermError):
    """Admissible coefficient index range is empty."""


class JTooSmall(CermError):
    """Resolution level below the minimum required by the filter support."""


class ZeroOnContour(CermError):
    """Refinement mask vanishes on the quadrature contour."""


class SingularV(CermError):
    """Eigenvector matrix is numerically singular."""


class DegeneratePolygon(CermError):
    """Input points do not describe a usable simple polygon."""


class ZeroArea(CermError):
    """Contour encloses (numerically) zero area."""


class EmptyMask(CermError):
    """Rasterization produced an empty mask."""
