"""GRD1: the portable on-disk array format

bytes 0-3 magic b"GRD1"; byte 4 dtype code (0 = u8, 1 = f32); byte 5 ndims
(2 or 3); ndims x u32 little-endian dims; raw row-major payload. No padding,
no checksum.
"""
import struct
from logging import getLogger
from pathlib import Path
from typing import Optional, Union

import numpy as np

from vlmseg.classes.enums import GridDType, GridKind
from vlmseg.classes.grid import ConfidenceMap, LabelMap, PixelMask, ProbMap
from vlmseg.errors import (
    BadMagicError,
    DimensionOverflowError,
    GridFormatError,
    TruncatedPayloadError,
)

logger = getLogger("vlmseg")

MAGIC = b"GRD1"
MAX_PAYLOAD_BYTES = 1 << 31

_NUMPY_DTYPES = {GridDType.U8: np.dtype("u1"), GridDType.F32: np.dtype("<f4")}

Grid = Union[LabelMap, ProbMap, ConfidenceMap, PixelMask]


def encode_grid(value: Union[Grid, np.ndarray]) -> bytes:
    array = value if isinstance(value, np.ndarray) else value.data
    if array.ndim not in (2, 3):
        raise GridFormatError(f"GRD1 stores 2-D or 3-D grids, got shape {array.shape}")
    if array.dtype == np.bool_ or np.issubdtype(array.dtype, np.integer):
        dtype = GridDType.U8
        if array.size and (array.min() < 0 or array.max() > 255):
            raise GridFormatError("integer grids must fit in u8")
    else:
        dtype = GridDType.F32
    payload = np.ascontiguousarray(array, dtype=_NUMPY_DTYPES[dtype]).tobytes()
    header = MAGIC + struct.pack("<BB", dtype.value, array.ndim)
    header += struct.pack(f"<{array.ndim}I", *array.shape)
    return header + payload


def decode_grid(raw: bytes) -> np.ndarray:
    if len(raw) < 6:
        if raw[:4] != MAGIC[: len(raw[:4])]:
            raise BadMagicError(bytes(raw[:4]))
        raise TruncatedPayloadError(f"header needs 6 bytes, got {len(raw)}")
    if raw[:4] != MAGIC:
        raise BadMagicError(bytes(raw[:4]))
    dtype_code, ndims = raw[4], raw[5]
    try:
        dtype = GridDType(dtype_code)
    except ValueError:
        raise GridFormatError(f"unknown dtype code {dtype_code}") from None
    if ndims not in (2, 3):
        raise GridFormatError(f"ndims must be 2 or 3, got {ndims}")
    dims_end = 6 + 4 * ndims
    if len(raw) < dims_end:
        raise TruncatedPayloadError(f"header needs {dims_end} bytes, got {len(raw)}")
    dims = struct.unpack(f"<{ndims}I", raw[6:dims_end])
    if any(dim == 0 for dim in dims):
        raise DimensionOverflowError(f"zero dimension in {dims}")
    itemsize = _NUMPY_DTYPES[dtype].itemsize
    expected = itemsize
    for dim in dims:
        expected *= dim
        if expected > MAX_PAYLOAD_BYTES:
            raise DimensionOverflowError(f"dims {dims} exceed {MAX_PAYLOAD_BYTES} payload bytes")
    payload = raw[dims_end:]
    if len(payload) < expected:
        raise TruncatedPayloadError(f"payload has {len(payload)} bytes, dims {dims} need {expected}")
    if len(payload) > expected:
        raise GridFormatError(f"{len(payload) - expected} trailing bytes after payload")
    return np.frombuffer(payload, dtype=_NUMPY_DTYPES[dtype]).reshape(dims)


def wrap_grid(array: np.ndarray, kind: Optional[GridKind] = None):
    if kind is None:
        if array.dtype == np.uint8 and array.ndim == 2:
            kind = GridKind.LABEL
        elif array.ndim == 3:
            kind = GridKind.PROB
        else:
            kind = GridKind.CONFIDENCE
    if kind == GridKind.LABEL:
        return LabelMap(data=array)
    if kind == GridKind.PROB:
        return ProbMap(data=array)
    if kind == GridKind.CONFIDENCE:
        return ConfidenceMap(data=array)
    if kind == GridKind.MASK:
        return PixelMask(data=array)
    return array


def write_grid(value: Union[Grid, np.ndarray], path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_grid(value))


def read_grid(path: Union[str, Path], kind: Optional[GridKind] = None):
    raw = Path(path).read_bytes()
    try:
        array = decode_grid(raw)
    except GridFormatError as err:
        logger.debug(f"Cannot parse {path}: {err}")
        raise
    return wrap_grid(array, kind)
