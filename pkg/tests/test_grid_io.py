import struct

import numpy as np
import pytest

from vlmseg.classes.enums import GridKind
from vlmseg.classes.grid import ConfidenceMap, LabelMap, PixelMask, ProbMap
from vlmseg.errors import (
    BadMagicError,
    DimensionOverflowError,
    GridFormatError,
    TruncatedPayloadError,
)
from vlmseg.grid_io import decode_grid, encode_grid, read_grid, write_grid


def test_header_layout():
    raw = encode_grid(LabelMap(data=np.arange(6, dtype=np.uint8).reshape(2, 3)))
    assert raw[:4] == b"GRD1"
    assert raw[4] == 0 and raw[5] == 2
    assert struct.unpack("<2I", raw[6:14]) == (2, 3)
    assert raw[14:] == bytes(range(6))

    raw = encode_grid(np.ones((2, 2, 2), dtype=np.float64))
    assert raw[4] == 1 and raw[5] == 3
    assert len(raw) == 6 + 12 + 8 * 4


def test_random_grids_survive_disk(tmp_path):
    rng = np.random.default_rng(7)
    for idx in range(1000):
        shape = tuple(rng.integers(1, 9, size=int(rng.integers(2, 4))))
        if idx % 2:
            array = rng.integers(0, 256, size=shape).astype(np.uint8)
        else:
            array = rng.normal(size=shape).astype(np.float32)
        path = tmp_path / f"{idx}.grd"
        write_grid(array, path)
        back = read_grid(path, GridKind.ARRAY)
        assert back.dtype == array.dtype
        assert np.array_equal(back, array)


def test_kind_inference(tmp_path):
    write_grid(LabelMap(data=[[0, 1]]), tmp_path / "a.grd")
    write_grid(ProbMap(data=np.full((1, 2, 2), 0.5)), tmp_path / "b.grd")
    write_grid(ConfidenceMap(data=[[0.5, 1.0]]), tmp_path / "c.grd")
    write_grid(PixelMask(data=[[True, False]]), tmp_path / "nested" / "d.grd")
    assert isinstance(read_grid(tmp_path / "a.grd"), LabelMap)
    assert isinstance(read_grid(tmp_path / "b.grd"), ProbMap)
    assert isinstance(read_grid(tmp_path / "c.grd"), ConfidenceMap)
    mask = read_grid(tmp_path / "nested" / "d.grd", GridKind.MASK)
    assert isinstance(mask, PixelMask) and mask.data.tolist() == [[True, False]]


def test_bad_magic():
    raw = b"GRD2" + encode_grid(np.zeros((2, 2), dtype=np.uint8))[4:]
    with pytest.raises(BadMagicError, match="bad magic"):
        decode_grid(raw)


def test_truncated_and_overflowing_files():
    raw = encode_grid(np.zeros((4, 4), dtype=np.uint8))
    with pytest.raises(TruncatedPayloadError):
        decode_grid(raw[:-1])
    with pytest.raises(TruncatedPayloadError):
        decode_grid(raw[:9])
    with pytest.raises(GridFormatError):
        decode_grid(raw + b"\x00")
    huge = b"GRD1" + bytes([1, 3]) + struct.pack("<3I", 65536, 65536, 65536)
    with pytest.raises(DimensionOverflowError):
        decode_grid(huge)
    zero = b"GRD1" + bytes([0, 2]) + struct.pack("<2I", 0, 4)
    with pytest.raises(DimensionOverflowError):
        decode_grid(zero)


def test_bad_dtype_and_rank():
    with pytest.raises(GridFormatError):
        decode_grid(b"GRD1" + bytes([7, 2]) + struct.pack("<2I", 1, 1) + b"\x00")
    with pytest.raises(GridFormatError):
        decode_grid(b"GRD1" + bytes([0, 4]) + struct.pack("<4I", 1, 1, 1, 1) + b"\x00")
    with pytest.raises(GridFormatError):
        encode_grid(np.zeros(4))
    with pytest.raises(GridFormatError):
        encode_grid(np.full((2, 2), 300))
