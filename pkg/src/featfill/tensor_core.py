"""Feature tensors, channel mosaics, 8-bit quantization and file I/O.

A feature tensor is stored as ``(channels, height, width)``.  Channels are
tiled row-major into the smallest square layout that holds them all; unused
tiles are zero.  The binary ``LTNS`` format is little-endian::

    magic "LTNS" | version u16 = 1 | channels u32 | height u32 | width u32
    channels * height * width float32 values, channel-major, row-major
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

LTNS_MAGIC = b"LTNS"
LTNS_VERSION = 1
_LTNS_HEADER = struct.Struct("<4sHIII")
LTNS_HEADER_SIZE = _LTNS_HEADER.size  # 18 bytes

# refuse headers describing more than 2**31 values
_MAX_ELEMENTS = 1 << 31

LEVELS = 256


class FormatError(ValueError):
    """Raised for malformed or truncated tensor / image files."""


@dataclass(frozen=True, eq=False)
class FeatureTensor:
    """``channels`` grids of ``height x width`` float32 activations."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise ValueError(f"feature tensor must be (C, H, W) with positive sizes, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("feature tensor contains non-finite values")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def __eq__(self, other):
        if not isinstance(other, FeatureTensor):
            return NotImplemented
        return self.data.shape == other.data.shape and np.array_equal(self.data, other.data)


@dataclass(frozen=True, eq=False)
class Mosaic:
    grid: np.ndarray
    tile_rows: int
    tile_cols: int
    channel_height: int
    channel_width: int
    original_channels: int

    def __post_init__(self):
        grid = np.asarray(self.grid)
        if grid.ndim != 2:
            raise ValueError("mosaic grid must be 2-D")
        expected = (self.tile_rows * self.channel_height, self.tile_cols * self.channel_width)
        if grid.shape != expected:
            raise ValueError(f"mosaic grid {grid.shape} disagrees with layout {expected}")
        if self.tile_rows * self.tile_cols < self.original_channels or self.original_channels < 1:
            raise ValueError("tile layout cannot hold the recorded channel count")
        object.__setattr__(self, "grid", grid)

    def with_grid(self, grid: np.ndarray) -> "Mosaic":
        """Same layout, different pixel values."""
        return Mosaic(grid, self.tile_rows, self.tile_cols, self.channel_height,
                      self.channel_width, self.original_channels)


@dataclass(frozen=True)
class QuantParams:
    lo: float
    hi: float
    levels: int = LEVELS

    def __post_init__(self):
        if not (self.lo <= self.hi):
            raise ValueError(f"quantization range inverted: lo={self.lo} hi={self.hi}")
        if self.levels != LEVELS:
            raise ValueError("only 8-bit quantization (256 levels) is supported")


def tile_layout(channels: int) -> tuple[int, int]:
    side = math.isqrt(channels)
    if side * side < channels:
        side += 1
    return side, side


def tile(tensor: FeatureTensor) -> Mosaic:
    """Place channel ``k`` at tile ``(k // cols, k % cols)``; pad with zero tiles."""
    c, h, w = tensor.data.shape
    rows, cols = tile_layout(c)
    padded = np.zeros((rows * cols, h, w), dtype=tensor.data.dtype)
    padded[:c] = tensor.data
    grid = padded.reshape(rows, cols, h, w).transpose(0, 2, 1, 3).reshape(rows * h, cols * w)
    return Mosaic(grid, rows, cols, h, w, c)


def untile(mosaic: Mosaic) -> FeatureTensor:
    rows, cols = mosaic.tile_rows, mosaic.tile_cols
    h, w = mosaic.channel_height, mosaic.channel_width
    if mosaic.grid.shape != (rows * h, cols * w):
        raise ValueError("mosaic layout disagrees with grid dimensions")
    blocks = mosaic.grid.reshape(rows, h, cols, w).transpose(0, 2, 1, 3).reshape(rows * cols, h, w)
    return FeatureTensor(blocks[: mosaic.original_channels])


def untile_array(grid: np.ndarray, like: Mosaic) -> np.ndarray:
    """Untile any per-pixel array (e.g. a loss mask) using ``like``'s layout."""
    rows, cols = like.tile_rows, like.tile_cols
    h, w = like.channel_height, like.channel_width
    grid = np.asarray(grid)
    if grid.shape != (rows * h, cols * w):
        raise ValueError("array shape disagrees with mosaic layout")
    blocks = grid.reshape(rows, h, cols, w).transpose(0, 2, 1, 3).reshape(rows * cols, h, w)
    return blocks[: like.original_channels]


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize(grid) -> tuple[np.ndarray, QuantParams]:
    """Map a real grid to bytes using its global min/max.

    Accepts a :class:`Mosaic` or a bare 2-D array.  A constant grid maps to
    all zeros.
    """
    values = np.asarray(grid.grid if isinstance(grid, Mosaic) else grid, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ValueError("cannot quantize non-finite values")
    lo, hi = float(values.min()), float(values.max())
    params = QuantParams(lo, hi)
    if hi == lo:
        return np.zeros(values.shape, dtype=np.uint8), params
    q = _round_half_away(255.0 * (values - lo) / (hi - lo))
    return np.clip(q, 0, 255).astype(np.uint8), params


def dequantize(data: np.ndarray, params: QuantParams) -> np.ndarray:
    q = np.asarray(data, dtype=np.float64)
    if params.hi == params.lo:
        return np.full(q.shape, params.lo, dtype=np.float64)
    return params.lo + q * ((params.hi - params.lo) / 255.0)


def to_gray(values: np.ndarray, params: QuantParams) -> np.ndarray:
    """Express real values on the 0..255 gray-level scale of ``params`` (unrounded)."""
    values = np.asarray(values, dtype=np.float64)
    if params.hi == params.lo:
        return np.zeros(values.shape, dtype=np.float64)
    return (values - params.lo) * (255.0 / (params.hi - params.lo))


def from_gray(gray: np.ndarray, params: QuantParams) -> np.ndarray:
    gray = np.asarray(gray, dtype=np.float64)
    if params.hi == params.lo:
        return np.full(gray.shape, params.lo, dtype=np.float64)
    return params.lo + gray * ((params.hi - params.lo) / 255.0)


# --- files -----------------------------------------------------------------

def write_tensor(path, tensor: FeatureTensor) -> None:
    c, h, w = tensor.data.shape
    header = _LTNS_HEADER.pack(LTNS_MAGIC, LTNS_VERSION, c, h, w)
    payload = np.ascontiguousarray(tensor.data, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def read_tensor(path) -> FeatureTensor:
    raw = Path(path).read_bytes()
    if len(raw) < LTNS_HEADER_SIZE:
        raise FormatError(f"{path}: file shorter than the LTNS header")
    magic, version, c, h, w = _LTNS_HEADER.unpack_from(raw)
    if magic != LTNS_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != LTNS_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if c == 0 or h == 0 or w == 0:
        raise FormatError(f"{path}: zero-sized dimension ({c}, {h}, {w})")
    count = c * h * w
    if count > _MAX_ELEMENTS:
        raise FormatError(f"{path}: dimensions ({c}, {h}, {w}) overflow the element limit")
    expected = LTNS_HEADER_SIZE + 4 * count
    if len(raw) < expected:
        raise FormatError(f"{path}: truncated payload ({len(raw)} of {expected} bytes)")
    if len(raw) > expected:
        raise FormatError(f"{path}: {len(raw) - expected} trailing bytes after payload")
    data = np.frombuffer(raw, dtype="<f4", count=count, offset=LTNS_HEADER_SIZE)
    try:
        return FeatureTensor(data.reshape(c, h, w))
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def write_pgm(path, image: np.ndarray) -> None:
    """Binary PGM (P5, maxval 255)."""
    image = np.asarray(image)
    if image.ndim != 2 or image.dtype != np.uint8:
        raise ValueError("PGM export expects a 2-D uint8 array")
    h, w = image.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + image.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PGM header")
        fields.append(raw[start:pos])
    pos += 1  # single whitespace byte before the raster
    if fields[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (magic {fields[0]!r})")
    try:
        w, h, maxval = (int(f) for f in fields[1:])
    except ValueError as exc:
        raise FormatError(f"{path}: non-numeric PGM header") from exc
    if maxval != 255:
        raise FormatError(f"{path}: only maxval 255 is supported, got {maxval}")
    if len(raw) - pos < w * h:
        raise FormatError(f"{path}: truncated PGM raster")
    return np.frombuffer(raw, dtype=np.uint8, count=w * h, offset=pos).reshape(h, w).copy()


def write_quant_params(path, params: QuantParams) -> None:
    Path(path).write_text(f"{params.lo!r} {params.hi!r}\n")


def read_quant_params(path) -> QuantParams:
    parts = Path(path).read_text().split()
    if len(parts) != 2:
        raise FormatError(f"{path}: expected two reals, got {len(parts)} fields")
    try:
        return QuantParams(float(parts[0]), float(parts[1]))
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
