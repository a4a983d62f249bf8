"""Exception hierarchy shared by all condmix modules."""


class CondMixError(Exception):
    """Base class for every error raised by condmix."""


class DomainError(CondMixError, ValueError):
    """A covariate lies outside the unit hypercube."""


class NotSPD(CondMixError, ValueError):
    """A covariance matrix is not symmetric positive definite."""


class UnsupportedDimension(CondMixError, ValueError):
    """The requested operation is only defined for smaller d or p."""


class DegenerateComponent(CondMixError):
    """A mixture component collapsed during fitting.

    Attributes
    ----------
    component : int
        Index of the collapsed component.
    iteration : int or None
        EM iteration at which the collapse was detected (set by ``fit``).
    """

    def __init__(self, message, component=None, iteration=None):
        super().__init__(message)
        self.component = component
        self.iteration = iteration


class TooFewPoints(CondMixError, ValueError):
    """Not enough observations for the requested construction."""


class InitFailure(CondMixError):
    """Every initialization trial degenerated."""


class NoJump(CondMixError):
    """The selected-dimension path is constant over the kappa grid."""


class InvalidBox(CondMixError, ValueError):
    """Inconsistent eigenvalue/volume box or constants for the theory toolkit."""


class PreconditionViolated(CondMixError, ValueError):
    """Inputs to the bracket verifier fail one of its closeness conditions.

    Attributes
    ----------
    failed : list of str
        Names of the conditions that do not hold.
    """

    def __init__(self, failed):
        super().__init__("bracket preconditions violated: " + ", ".join(failed))
        self.failed = list(failed)


class BracketViolated(CondMixError):
    """A density escaped its bracket at ``witness`` = (x, y)."""

    def __init__(self, witness):
        super().__init__(f"bracket containment fails at x={witness[0]!r}, y={witness[1]!r}")
        self.witness = witness
