"""Exception hierarchy.

Physics-domain failures (a configuration that is well formed but asks for
something the model cannot deliver) derive from :class:`PhysicsDomainError`;
the command-line front end maps them to exit code 3.
"""


class WvalabError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(WvalabError, ValueError):
    """Malformed or inconsistent experiment configuration."""

    def __init__(self, message, field=None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class InvalidDimension(WvalabError, ValueError):
    pass


class DimensionMismatch(WvalabError, ValueError):
    pass


class NonHermitianGenerator(WvalabError, ValueError):
    pass


class PhysicsDomainError(WvalabError):
    """The request is well formed but physically degenerate or unattainable."""


class TruncationInadequate(PhysicsDomainError):
    def __init__(self, message, tail_mass=None):
        self.tail_mass = tail_mass
        super().__init__(message)


class GridTooNarrow(PhysicsDomainError):
    pass


class OrthogonalSelection(PhysicsDomainError):
    pass


class ZeroProbability(PhysicsDomainError):
    pass


class UnachievableWeakValue(PhysicsDomainError):
    pass


class DegeneratePreselection(PhysicsDomainError):
    pass


class CommutatorVanishes(PhysicsDomainError):
    pass


class WeakCouplingViolation(PhysicsDomainError):
    """g|A_w| too large for the first-order expressions to mean anything."""


class DerivativeUnconverged(PhysicsDomainError):
    pass


class ZeroSlope(PhysicsDomainError):
    pass


class MaximumOnBoundary(PhysicsDomainError):
    pass
