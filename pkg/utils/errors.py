class SlamError(Exception):
    """Base class for configuration and data errors raised by the SLAM stack."""


class ConfigError(SlamError):
    """Invalid or unknown configuration entry."""


class CalibrationMismatchError(SlamError):
    """Images do not match the calibrated image size, or calibration is incomplete."""


class MalformedLayoutError(SlamError):
    """Dataset directory does not follow the expected layout."""


class MissingRightCameraError(MalformedLayoutError):
    """Stereo mode requested on a dataset without a right camera stream."""


class InsufficientAssociationError(SlamError):
    """Too few estimated/ground-truth pose pairs to evaluate a trajectory."""
