"""
Bit-exact file codecs: PGM (P5, 8-bit), BSDT tensors and BSDC checkpoints.

Layouts (all integers little-endian):
- PGM:  "P5\\n{width} {height}\\n255\\n" then height*width bytes, row-major
- BSDT: b"BSDT", u8 version=1, u8 dtype (0 f32, 1 f64), u8 ndim, u8 pad=0,
        ndim x u32 dims, then the row-major payload
- BSDC: b"BSDC", u8 version=1, u32 count, then per record
        u16 name_len, UTF-8 name, embedded BSDT

Writers go through a temp file and os.replace so a crashed run never leaves a
half-written artifact behind.
"""

import io
import logging
import os
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import FormatError
from .maskops import BinaryMask

logger = logging.getLogger(__name__)

BSDT_MAGIC = b"BSDT"
BSDC_MAGIC = b"BSDC"
FORMAT_VERSION = 1
MASK_THRESHOLD = 128

_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_DTYPE_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1}


def _atomic_write(path: Path, payload: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


# ============================================================================
# PGM
# ============================================================================


def _read_token(data: bytes, pos: int) -> tuple[bytes, int]:
    """Next whitespace-delimited header token, skipping '#' comments."""
    n = len(data)
    while pos < n:
        if data[pos:pos + 1].isspace():
            pos += 1
        elif data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos:pos + 1].isspace():
        pos += 1
    if start == pos:
        raise FormatError("Truncated PGM header")
    return data[start:pos], pos


def decode_pgm(data: bytes) -> np.ndarray:
    """Parse a binary 8-bit PGM into a (height, width) uint8 array."""
    magic, pos = _read_token(data, 0)
    if magic != b"P5":
        raise FormatError(f"Not a binary PGM (magic {magic!r})")
    try:
        width_tok, pos = _read_token(data, pos)
        height_tok, pos = _read_token(data, pos)
        maxval_tok, pos = _read_token(data, pos)
        width, height, maxval = int(width_tok), int(height_tok), int(maxval_tok)
    except ValueError as e:
        raise FormatError(f"Malformed PGM header: {e}") from e
    if maxval != 255:
        raise FormatError(f"Only 8-bit PGM is supported, maxval={maxval}")
    if width < 1 or height < 1:
        raise FormatError(f"Invalid PGM dims {width}x{height}")
    # exactly one whitespace byte separates the header from the raster
    pos += 1
    raster = data[pos:pos + width * height]
    if len(raster) != width * height:
        raise FormatError(f"PGM raster has {len(raster)} bytes, expected {width * height}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width).copy()


def encode_pgm(pixels: np.ndarray) -> bytes:
    pixels = np.asarray(pixels)
    if pixels.ndim != 2:
        raise FormatError(f"PGM needs a 2-D array, got shape {pixels.shape}")
    height, width = pixels.shape
    header = f"P5\n{width} {height}\n255\n".encode("ascii")
    return header + pixels.astype(np.uint8).tobytes()


def read_pgm(path: Path) -> np.ndarray:
    return decode_pgm(Path(path).read_bytes())


def write_pgm(path: Path, pixels: np.ndarray) -> None:
    _atomic_write(path, encode_pgm(pixels))


def read_mask(path: Path) -> BinaryMask:
    """Pixels >= 128 are foreground."""
    return BinaryMask(read_pgm(path) >= MASK_THRESHOLD)


def write_mask(path: Path, mask: BinaryMask) -> None:
    write_pgm(path, np.where(mask.cells, 255, 0).astype(np.uint8))


def read_image(path: Path) -> np.ndarray:
    """Grayscale image as float64 in [0, 1]."""
    return read_pgm(path).astype(np.float64) / 255.0


def write_image(path: Path, values: np.ndarray) -> None:
    quantized = np.clip(np.rint(np.asarray(values, dtype=np.float64) * 255.0), 0, 255)
    write_pgm(path, quantized.astype(np.uint8))


# ============================================================================
# BSDT tensors
# ============================================================================


def encode_bsdt(array: np.ndarray) -> bytes:
    """Serialize a float32/float64 array; other dtypes are stored as float64."""
    array = np.asarray(array)
    code = _DTYPE_CODES.get(array.dtype, 1)
    if array.ndim > 255:
        raise FormatError(f"BSDT supports at most 255 dims, got {array.ndim}")
    header = struct.pack("<4sBBBB", BSDT_MAGIC, FORMAT_VERSION, code, array.ndim, 0)
    dims = struct.pack(f"<{array.ndim}I", *array.shape)
    payload = np.ascontiguousarray(array, dtype=_DTYPES[code]).tobytes()
    return header + dims + payload


def _decode_bsdt_from(stream: io.BytesIO) -> np.ndarray:
    head = stream.read(8)
    if len(head) != 8:
        raise FormatError("Truncated BSDT header")
    magic, version, code, ndim, pad = struct.unpack("<4sBBBB", head)
    if magic != BSDT_MAGIC:
        raise FormatError(f"Bad BSDT magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"Unsupported BSDT version {version}")
    if code not in _DTYPES:
        raise FormatError(f"Unknown BSDT dtype code {code}")
    if pad != 0:
        raise FormatError("BSDT pad byte must be 0")
    raw_dims = stream.read(4 * ndim)
    if len(raw_dims) != 4 * ndim:
        raise FormatError("Truncated BSDT dims")
    dims = struct.unpack(f"<{ndim}I", raw_dims)
    dtype = _DTYPES[code]
    nbytes = dtype.itemsize * int(np.prod(dims, dtype=np.int64))
    payload = stream.read(nbytes)
    if len(payload) != nbytes:
        raise FormatError(f"BSDT payload has {len(payload)} bytes, expected {nbytes}")
    return np.frombuffer(payload, dtype=dtype).reshape(dims).copy()


def decode_bsdt(data: bytes) -> np.ndarray:
    stream = io.BytesIO(data)
    array = _decode_bsdt_from(stream)
    if stream.read(1):
        raise FormatError("Trailing bytes after BSDT payload")
    return array


def read_bsdt(path: Path) -> np.ndarray:
    return decode_bsdt(Path(path).read_bytes())


def write_bsdt(path: Path, array: np.ndarray) -> None:
    _atomic_write(path, encode_bsdt(array))


# ============================================================================
# BSDC checkpoints
# ============================================================================


def encode_bsdc(tensors: Mapping[str, np.ndarray]) -> bytes:
    """Records are written in mapping order."""
    parts = [struct.pack("<4sBI", BSDC_MAGIC, FORMAT_VERSION, len(tensors))]
    for name, array in tensors.items():
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise FormatError(f"Tensor name too long: {name[:40]}...")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(encode_bsdt(array))
    return b"".join(parts)


def decode_bsdc(data: bytes) -> dict[str, np.ndarray]:
    stream = io.BytesIO(data)
    head = stream.read(9)
    if len(head) != 9:
        raise FormatError("Truncated BSDC header")
    magic, version, count = struct.unpack("<4sBI", head)
    if magic != BSDC_MAGIC:
        raise FormatError(f"Bad BSDC magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"Unsupported BSDC version {version}")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        raw_len = stream.read(2)
        if len(raw_len) != 2:
            raise FormatError("Truncated BSDC record")
        (name_len,) = struct.unpack("<H", raw_len)
        raw_name = stream.read(name_len)
        if len(raw_name) != name_len:
            raise FormatError("Truncated BSDC record name")
        try:
            name = raw_name.decode("utf-8")
        except UnicodeDecodeError as e:
            raise FormatError(f"BSDC record name is not UTF-8: {e}") from e
        if name in tensors:
            raise FormatError(f"Duplicate BSDC record '{name}'")
        tensors[name] = _decode_bsdt_from(stream)
    if stream.read(1):
        raise FormatError("Trailing bytes after BSDC records")
    return tensors


def read_bsdc(path: Path) -> dict[str, np.ndarray]:
    return decode_bsdc(Path(path).read_bytes())


def write_bsdc(path: Path, tensors: Mapping[str, np.ndarray]) -> None:
    _atomic_write(path, encode_bsdc(tensors))
    logger.debug(f"Wrote {len(tensors)} tensors to {path}")
