"""Image container and file formats.

An :class:`Image` is an immutable H x W x C grid of float64 intensities in
[0, 1], C being 1 (grayscale) or 3 (RGB), stored row-major with interleaved
channels.

Three on-disk formats are supported:

* binary PPM (``P6``, maxval 255) for 3-channel images,
* binary PGM (``P5``, maxval 255) for 1-channel images,
* ``MTEN``, a raw float tensor: the magic bytes ``MTEN``, then height,
  width and channels as little-endian uint32, then height*width*channels
  float32 little-endian values.

PPM/PGM quantize with ``floor(v * 255 + 0.5)`` and dequantize with
``k / 255``. MTEN loading clamps finite values into [0, 1] and rejects NaN.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

_MTEN_MAGIC = b"MTEN"


class Image:
    """Immutable image with pixel intensities in [0, 1]."""

    __slots__ = ("pixels",)

    def __init__(self, pixels):
        arr = np.array(pixels, dtype=np.float64)
        if arr.ndim != 3:
            raise ValueError(f"image must be H x W x C, got shape {arr.shape}")
        h, w, c = arr.shape
        if h < 1 or w < 1:
            raise ValueError(f"image dimensions must be positive, got {h} x {w}")
        if c not in (1, 3):
            raise ValueError(f"channel count must be 1 or 3, got {c}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image contains non-finite pixel values")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("pixel values must lie in [0, 1]")
        arr.setflags(write=False)
        self.pixels = arr

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.pixels.shape

    def flat(self) -> np.ndarray:
        """Row-major, channel-interleaved view of the pixel buffer."""
        return self.pixels.reshape(-1)

    def __eq__(self, other) -> bool:
        return isinstance(other, Image) and np.array_equal(self.pixels, other.pixels)

    def __repr__(self) -> str:
        return f"Image({self.height}x{self.width}x{self.channels})"


def quantize_u8(arr: np.ndarray) -> np.ndarray:
    """Map [0, 1] floats to uint8 by floor(v * 255 + 0.5)."""
    return np.floor(arr * 255.0 + 0.5).astype(np.uint8)


def netpbm_bytes(img: Image) -> bytes:
    """Serialized P6/P5 bytes for an image; also the unit of content checksums."""
    magic = b"P6" if img.channels == 3 else b"P5"
    header = b"%s\n%d %d\n255\n" % (magic, img.width, img.height)
    return header + quantize_u8(img.pixels).tobytes()


def write_netpbm(img: Image, path) -> None:
    """Write a P6 PPM (3-channel) or P5 PGM (1-channel) file."""
    Path(path).write_bytes(netpbm_bytes(img))


def _parse_netpbm_tokens(data: bytes, count: int) -> tuple[list[int], int]:
    """Read ``count`` whitespace/comment-separated integers, return them and
    the offset just past the single whitespace byte that ends the last one."""
    tokens: list[int] = []
    i = 0
    while len(tokens) < count:
        if i >= len(data):
            raise ValueError("truncated netpbm header")
        ch = data[i : i + 1]
        if ch == b"#":
            while i < len(data) and data[i : i + 1] != b"\n":
                i += 1
        elif ch.isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j : j + 1].isspace() and data[j : j + 1] != b"#":
                j += 1
            tokens.append(int(data[i:j]))
            i = j
            if len(tokens) == count:
                if i >= len(data) or not data[i : i + 1].isspace():
                    raise ValueError("netpbm header must end with whitespace")
                i += 1
    return tokens, i


def read_netpbm(path) -> Image:
    data = Path(path).read_bytes()
    if data[:2] == b"P6":
        channels = 3
    elif data[:2] == b"P5":
        channels = 1
    else:
        raise ValueError(f"{path}: not a binary PPM/PGM file")
    (w, h, maxval), offset = _parse_netpbm_tokens(data[2:], 3)
    offset += 2
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 is supported, got {maxval}")
    need = h * w * channels
    raster = data[offset : offset + need]
    if len(raster) != need:
        raise ValueError(f"{path}: raster truncated ({len(raster)} of {need} bytes)")
    arr = np.frombuffer(raster, dtype=np.uint8).astype(np.float64) / 255.0
    return Image(arr.reshape(h, w, channels))


def write_mten(img: Image, path) -> None:
    h, w, c = img.shape
    payload = img.pixels.astype("<f4").tobytes()
    Path(path).write_bytes(_MTEN_MAGIC + struct.pack("<III", h, w, c) + payload)


def read_mten(path) -> Image:
    data = Path(path).read_bytes()
    if data[:4] != _MTEN_MAGIC:
        raise ValueError(f"{path}: missing MTEN magic")
    if len(data) < 16:
        raise ValueError(f"{path}: truncated MTEN header")
    h, w, c = struct.unpack("<III", data[4:16])
    need = h * w * c * 4
    if len(data) != 16 + need:
        raise ValueError(f"{path}: expected {need} payload bytes, got {len(data) - 16}")
    arr = np.frombuffer(data, dtype="<f4", offset=16).astype(np.float64)
    if np.any(np.isnan(arr)):
        raise ValueError(f"{path}: payload contains NaN")
    arr = np.clip(arr, 0.0, 1.0)
    return Image(arr.reshape(h, w, c))


def read_image(path) -> Image:
    """Load a PPM, PGM or MTEN file, dispatching on the magic bytes."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic[:2] in (b"P5", b"P6"):
        return read_netpbm(path)
    if magic == _MTEN_MAGIC:
        return read_mten(path)
    raise ValueError(f"{path}: unrecognized image format")
