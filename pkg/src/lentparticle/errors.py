"""Exception types raised across the package."""


class LentParticleError(Exception):
    """Base class for all package errors."""


class TruncatedMassZero(LentParticleError):
    """The truncated jump measure has no mass, so nothing can be simulated."""


class NonFiniteValue(LentParticleError):
    """A functional returned a non-finite value while differentiating a mark."""


class NonFiniteState(LentParticleError):
    """The Euler scheme produced a non-finite state (blow-up)."""


class SingularJacobian(LentParticleError):
    """The flow Jacobian became numerically singular."""


class CoefficientNotVanishing(LentParticleError):
    """SDE coefficients do not vanish at the origin."""


class BandwidthNonPositive(LentParticleError):
    """A kernel bandwidth was zero or negative."""


class ConfigError(LentParticleError):
    """Invalid experiment configuration."""
