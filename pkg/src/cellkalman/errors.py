"""Exception types raised across the package."""


class CellKalmanError(Exception):
    """Base class for all package-specific errors."""


class NonClosedCycle(CellKalmanError):
    """A candidate face's boundary does not vanish under the node-edge incidence."""


class DuplicateFace(CellKalmanError):
    """Two candidate faces share the same unordered edge set."""


class DanglingIndex(CellKalmanError):
    """An edge or face references an index outside the complex."""


class PoolOverflow(CellKalmanError):
    """Candidate-cycle enumeration exceeded the configured pool cap."""


class ShapeMismatch(CellKalmanError):
    """An array argument has an incompatible shape."""


class SingularInnovation(CellKalmanError):
    """Innovation covariance is numerically singular (condition number > 1e12)."""


class InsufficientStream(CellKalmanError):
    """The observation stream is too short for the requested identification run."""


class MissingGroundTruth(CellKalmanError):
    """Identification metrics were requested without a ground-truth activation."""


class ConfigError(CellKalmanError):
    """A run configuration is malformed or inconsistent."""
