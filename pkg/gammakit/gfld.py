"""
The GFLD binary field container.

    b"GFLD"                  magic
    u32 little-endian        version (1)
    u64 little-endian        header byte length
    header                   UTF-8 JSON: grid, layout, space, dtype, order
    payload                  little-endian complex128, component index
                             fastest, then axis 0 fastest
"""

from __future__ import annotations

import json
import logging
import struct
from pathlib import Path
from typing import Union

import numpy as np

from .errors import GfldFormatError, ShapeError
from .fields import Field, Grid, SupertensorLayout

logger = logging.getLogger(__name__)

MAGIC = b"GFLD"
VERSION = 1
DTYPE = "c128le"
ORDER = "component index fastest, then axis 0 fastest"

_PREAMBLE = struct.Struct("<4sIQ")


def encode(field: Field) -> bytes:
    header = {
        "grid": field.grid.to_json(),
        "layout": field.layout.to_json(),
        "space": field.space,
        "dtype": DTYPE,
        "order": ORDER,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("UTF-8")
    payload = np.ascontiguousarray(field.values, dtype="<c16").tobytes()
    return _PREAMBLE.pack(MAGIC, VERSION, len(header_bytes)) + header_bytes + payload


def decode(data: bytes) -> Field:
    if len(data) < _PREAMBLE.size:
        raise GfldFormatError("file too short for a GFLD preamble")
    magic, version, header_length = _PREAMBLE.unpack_from(data)
    if magic != MAGIC:
        raise GfldFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise GfldFormatError(f"unsupported GFLD version {version}")

    start = _PREAMBLE.size
    try:
        header = json.loads(data[start : start + header_length].decode("UTF-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise GfldFormatError(f"unreadable header: {e}") from e
    if header.get("dtype") != DTYPE:
        raise GfldFormatError(f"unsupported dtype {header.get('dtype')!r}")

    try:
        grid = Grid.from_json(header["grid"])
        layout = SupertensorLayout.from_json(header["layout"], grid.dim)
    except (KeyError, ShapeError) as e:
        raise GfldFormatError(f"bad header: {e}") from e

    payload = data[start + header_length :]
    expected = grid.size * layout.m * 16
    if len(payload) != expected:
        raise GfldFormatError(f"payload has {len(payload)} bytes, expected {expected}")
    values = np.frombuffer(payload, dtype="<c16").reshape(grid.size, layout.m)
    return Field(grid, layout, header["space"], values)


def write_field(path: Union[str, Path], field: Field) -> None:
    path = Path(path)
    logger.debug("Writing %s field to %s", field.space, path)
    path.write_bytes(encode(field))


def read_field(path: Union[str, Path]) -> Field:
    return decode(Path(path).read_bytes())
