"""Exception hierarchy shared by all modules."""


class HartreeLabError(Exception):
    """Base class for all errors raised by hartree_lab."""


class InvalidArgument(HartreeLabError, ValueError):
    """A precondition on an argument was violated."""


class DomainError(InvalidArgument):
    """Argument outside the mathematical domain of a function."""


class GridMismatch(InvalidArgument):
    """Profiles living on different grids were combined."""


class SizeExceeded(InvalidArgument):
    """Dense operation requested on a grid larger than the supported cap."""


class ResampleOutOfRange(InvalidArgument):
    """Rescaling would push the profile support beyond the grid."""


class NoConvergence(HartreeLabError):
    """An iterative solver hit its iteration cap."""


class Collapse(NoConvergence):
    """Ground-state iteration concentrated or its normalization diverged.

    Signals a mass at or above the critical mass.
    """


class BracketFailure(HartreeLabError):
    """Shooting could not find initial values with differing outcomes."""


class EigensolverFailure(HartreeLabError):
    """The dense symmetric eigensolver did not converge."""


class AmbiguousCount(HartreeLabError):
    """An eigenvalue sits too close to the kernel-counting radius."""


class Inconclusive(HartreeLabError):
    """An estimate could not be bracketed."""
