"""Exception hierarchy shared by all spinsat modules."""


class SpinSatError(Exception):
    """Base class for every error raised by spinsat."""


class InvalidParamsError(SpinSatError, ValueError):
    """Relaxation times or control amplitude violate the physical constraints."""


class ControlBoundsError(SpinSatError, ValueError):
    """A control value exceeds the normalized bound 2*pi."""


class DegenerateRelaxationError(SpinSatError, ValueError):
    """T1 == T2: the horizontal singular line does not exist."""


class SingularDenominatorError(SpinSatError, ZeroDivisionError):
    """The singular feedback law has a vanishing denominator."""


class OriginUndefinedError(SpinSatError, ValueError):
    """Polar angle requested at the origin."""


class StepUnderflowError(SpinSatError, RuntimeError):
    """Adaptive step size collapsed below the representable minimum."""


class PreconditionError(SpinSatError, ValueError):
    """An operation was called outside its documented domain."""


class OffLocusError(PreconditionError):
    """A point that should lie on the singular locus does not."""


class CollinearCrossingError(SpinSatError, ValueError):
    """A path passes through a point where F0 and F1 are collinear."""


class UnreachableError(SpinSatError):
    """The target cannot be reached with the requested construction."""


class ChainMismatchError(SpinSatError, ValueError):
    """Consecutive arcs of a schedule do not connect."""


class DomainError(SpinSatError, ValueError):
    """A closed-form expression was evaluated outside its domain."""
