"""Exceptions raised by the pipeline"""
from typing import Optional


class VlmSegError(Exception):
    """Base class of every error raised on purpose by this package"""


class ConfigurationError(VlmSegError, ValueError):
    """Invalid configuration value, unknown key or impossible run setup"""


class GridShapeError(VlmSegError, ValueError):
    """Malformed grid or grids whose shapes do not agree"""


class GridFormatError(VlmSegError):
    """The bytes are not a valid GRD1 file"""


class BadMagicError(GridFormatError):
    def __init__(self, magic: bytes):
        super().__init__(f"bad magic {magic!r}, expected b'GRD1'")
        self.magic = magic


class DimensionOverflowError(GridFormatError):
    """Declared dimensions are zero or describe more data than allowed"""


class TruncatedPayloadError(GridFormatError):
    """The header or payload ends before the declared size"""


class AugmentError(VlmSegError, ValueError):
    """Missing or inconsistent augmentation inputs"""


class TrainingError(VlmSegError, RuntimeError):
    """Non-finite loss or gradient during training"""


class MetricError(VlmSegError, ValueError):
    """A metric is undefined for the given input"""


class OracleError(VlmSegError):
    """The vision-language oracle could not produce a prediction"""


class OracleTransportError(OracleError):
    """Connection failure, timeout or non-200 answer"""

    def __init__(self, message: str, status_code: Optional[int] = None):
        super().__init__(message)
        self.status_code = status_code


class OracleResponseError(OracleError):
    """The answer is not JSON or does not follow the response schema"""


class OracleCoordinateError(OracleError):
    """A mention carries a box that cannot be turned into a pixel region"""
