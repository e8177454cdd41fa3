"""Exception types shared across the library."""


class RenewalKitError(Exception):
    """Base class for all library errors."""


class NoUnitEigenvalue(RenewalKitError):
    """R(1) has no eigenvalue within tolerance of 1."""


class NotSimple(RenewalKitError):
    """The eigenvalue near 1 is not algebraically simple / isolated."""


class MuZero(RenewalKitError):
    """The drift coefficient mu is numerically zero."""


class ProjectionNotZero(RenewalKitError):
    """Vector expected in the kernel of the eigenprojection is not."""


class OrderUnsupported(RenewalKitError):
    """Explicit expansion order outside the implemented range."""


class NonPositiveValues(RenewalKitError):
    """Rate fit requested on a window containing non-positive values."""


class NotSummable(RenewalKitError):
    """Normalization of a non-summable sequence requested."""


class DomainError(RenewalKitError):
    """Argument outside the map's domain."""


class SolverFailure(RenewalKitError):
    """Root bracketing / iteration failed."""


class NoConvergence(RenewalKitError):
    """Fixed-point iteration did not reach the residual target."""


class UnsupportedObservable(RenewalKitError):
    """Observable support touches the unresolved cell at the origin."""


class NonZeroMean(RenewalKitError):
    """Observable must integrate to zero for this operation."""


class InsufficientBranchPoints(RenewalKitError):
    """Return-time query beyond the stored branch-point ladder."""


class PeriodicReturns(RenewalKitError):
    """Return times share a common divisor > 1."""


class UnsupportedLevels(RenewalKitError):
    """Observable supported beyond the stored tower truncation."""


class TailUnavailable(RenewalKitError):
    """Tail extrapolation requested but the sequence carries none."""


class ConfigError(RenewalKitError):
    """Invalid experiment configuration; message names the offending key."""


class ComputeError(RenewalKitError):
    """Numerical failure inside an experiment, with module context."""
