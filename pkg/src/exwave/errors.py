"""Exception hierarchy.

Two families matter to callers: configuration/validation problems
(:class:`ValidationError`) and numerical failures discovered while running
(:class:`NumericalError`). The CLI maps them to exit codes 2 and 3.
"""


class ExwaveError(Exception):
    """Base class for all package errors."""


class ValidationError(ExwaveError):
    """A config, domain, or precondition check failed before any numerics ran."""


class NumericalError(ExwaveError):
    """A computation started and then failed or was detected to be unstable."""


# geometry
class NestingViolation(ValidationError):
    """A required strict inclusion between the nested boxes fails."""


class DisconnectedAnnulus(ValidationError):
    """The cell region between the buffer box and the outer boundary splits."""


class EmptyPatch(ValidationError):
    """The measurement patch resolves to no quadrature nodes."""


class ObstacleTouchesQ0(ValidationError):
    """The obstacle intersects the source or buffer box."""


class UnresolvedSurface(ValidationError):
    """A surface mesh has too few quadrature nodes to be meaningful."""


# wavesim
class CflViolation(NumericalError):
    """Time step exceeds the explicit stability limit."""


class SupportViolation(ValidationError):
    """Initial data does not vanish outside the source box."""


class NumericalBlowup(NumericalError):
    """Field amplitude exploded; the scheme is unstable for this configuration."""


class WindowTooShort(ValidationError):
    """Not enough usable samples in the requested fit window."""


class NonPositiveEnergy(NumericalError):
    """Energy series is non-positive where a log-linear fit was requested."""


# moments / reconstruct
class ZeroDenominator(ValidationError):
    """A relative quantity was requested against an identically-zero reference."""


class ConfigMismatch(ValidationError):
    """Two runs being combined were produced with different grids or stepping."""


class MissingTrace(ValidationError):
    """Boundary traces required by this operation were not recorded."""


class RhoOutOfRange(ValidationError):
    """Truncation radius exceeds the sampled frequency range."""


class EmptyMask(ValidationError):
    """A recovery mask contains no points."""


class ThresholdViolation(ValidationError):
    """A recovery mask reaches where the reference field is below threshold."""


class IllConditioned(NumericalError):
    """Linear system condition estimate exceeds the usable range."""


class InsufficientPatch(ValidationError):
    """The Cauchy patch resolves too few nodes for a stable fit."""
