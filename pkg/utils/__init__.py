from .errors import (
    SlamError,
    ConfigError,
    CalibrationMismatchError,
    MalformedLayoutError,
    MissingRightCameraError,
    InsufficientAssociationError,
)
from .logger import RunLogger, setup_logging, format_loop_event

__all__ = [
    'SlamError', 'ConfigError', 'CalibrationMismatchError', 'MalformedLayoutError',
    'MissingRightCameraError', 'InsufficientAssociationError',
    'RunLogger', 'setup_logging', 'format_loop_event',
]
