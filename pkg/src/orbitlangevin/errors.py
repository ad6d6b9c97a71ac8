"""Exception types shared across the package."""


class OrbitLangevinError(Exception):
    """Base class for all package-specific errors."""


class SingularOrbit(OrbitLangevinError):
    """Raised when an orbit-geometry quantity is requested at a singular point."""


class NonRetractable(OrbitLangevinError):
    """Raised when a matrix is too far from the orthogonal group to retract."""


class RankDeficient(OrbitLangevinError):
    """Raised when the truncated rank of the orbit map disagrees with the orbit dimension."""


class NotTangent(OrbitLangevinError):
    """Raised when a matrix claimed to be tangent to the group fails the antisymmetry check."""


class NonFinite(OrbitLangevinError):
    """Raised when an integrated state leaves the finite floating-point range."""


class StepRejected(OrbitLangevinError):
    """Raised when a post-step map (e.g. retraction) rejects the proposed state."""


class QuadratureFailure(OrbitLangevinError):
    """Raised when a reference density does not integrate to a finite positive mass."""


class ConfigError(OrbitLangevinError):
    """Raised when an experiment configuration is invalid."""
