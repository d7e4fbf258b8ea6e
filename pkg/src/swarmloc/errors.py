"""Exception and warning types shared across the package."""


class SwarmLocError(Exception):
    """Base class for all domain errors raised by this package."""


class CalibrationError(SwarmLocError):
    """Raised when a range calibration cannot be fit from the given samples."""


class DegenerateGeometryError(SwarmLocError):
    """Raised when an operation receives geometrically degenerate input,
    such as coincident poses where a bearing is undefined."""


class AlignmentError(SwarmLocError):
    """Raised when a rigid alignment cannot be computed."""


class EstimationDivergedError(SwarmLocError):
    """Raised when the direct pose solver produced non-finite values.

    Carries the last finite iterate so callers can inspect how far the
    solver got before failing.
    """

    def __init__(self, message, last_poses=None):
        super().__init__(message)
        self.last_poses = last_poses


class InitializationError(SwarmLocError):
    """Raised when a localization run cannot be bootstrapped, e.g. because
    the sensing graph never carries enough observations for a first fix."""


class ScenarioError(SwarmLocError):
    """Raised for malformed scenario configurations.  The message names the
    offending field."""


class TraceFormatError(SwarmLocError):
    """Raised when a recorded simulation trace cannot be parsed."""


class ObservabilityWarning(UserWarning):
    """Emitted when a pose estimation problem has fewer scalar observations
    than free degrees of freedom."""


class UpdateSkippedWarning(RuntimeWarning):
    """Emitted when a filter measurement update is skipped because the
    innovation covariance was not invertible."""
