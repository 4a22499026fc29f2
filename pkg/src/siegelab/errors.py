"""Exception types shared across the package."""


class SiegelabError(Exception):
    """Base class for all package-specific failures."""


class PrecisionError(SiegelabError):
    """Requested working precision cannot certify the result."""


class DivisorUnderflow(SiegelabError):
    """A small divisor fell below the resolvable threshold."""


class NonConvergence(SiegelabError):
    """An iterative solver exhausted its step budget."""


class CollapsedToFixedPoint(SiegelabError):
    """Cycle search degenerated onto a fixed point or a lower period."""


class BranchJump(SiegelabError):
    """Continuation landed on a different branch than the tracked one."""


class OrbitLeftOmega(SiegelabError):
    """An orbit left the admissible domain; ``index`` is the first bad step."""

    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"orbit left the domain at step {index}")


class StepUnderflow(SiegelabError):
    """Adaptive integrator could not meet the tolerance at the minimum step."""


class NonParabolic(SiegelabError):
    """Map lacks the nondegenerate quadratic term required for a Fatou chart."""


class InverseBranchLost(SiegelabError):
    """Backward iteration exited the domain of the tracked inverse branch."""


class AlphaTooLarge(SiegelabError):
    """Rotation number too large for a perturbed Fatou chart."""


class StripCollapsed(SiegelabError):
    """The perturbed coordinate strip has non-positive width."""


class PathExitsDomain(SiegelabError):
    """An integration path left the chart domain."""


class ReturnNotFound(SiegelabError):
    """No first return within the iterate budget."""
