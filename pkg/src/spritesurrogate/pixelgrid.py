"""Frames of discrete RGB colors: preprocessing and portable-pixmap I/O.

A color is identified by its packed ``0xRRGGBB`` integer, so equality and the
"smallest color" ordering are both exact integer operations.
"""
from __future__ import annotations

import os
import re
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "DimensionError",
    "ImageFormatError",
    "Frame",
    "pack_rgb",
    "unpack_rgb",
    "downsample",
    "framemax",
    "read_image",
    "write_image",
]


class DimensionError(ValueError):
    """Raised when frame dimensions do not satisfy an operation's precondition."""


class ImageFormatError(ValueError):
    """Malformed or unsupported pixmap data; ``offset`` is the failing byte."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


def pack_rgb(rgb) -> np.ndarray | int:
    """Pack ``(..., 3)`` uint8 RGB values into ``0xRRGGBB`` integers."""
    arr = np.asarray(rgb, dtype=np.int64)
    packed = (arr[..., 0] << 16) | (arr[..., 1] << 8) | arr[..., 2]
    if packed.ndim == 0:
        return int(packed)
    return packed


def unpack_rgb(color: int) -> tuple[int, int, int]:
    color = int(color)
    return (color >> 16) & 0xFF, (color >> 8) & 0xFF, color & 0xFF


@dataclass(frozen=True, eq=False)
class Frame:
    """Immutable ``height x width`` grid of RGB colors.

    ``rgb`` has shape ``(height, width, 3)`` and dtype uint8.  Pixel ``(x, y)``
    is column ``x``, row ``y`` with ``y`` growing downward.
    """

    rgb: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.rgb, dtype=np.uint8)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise DimensionError(f"expected (height, width, 3) array, got shape {arr.shape}")
        if arr.shape[0] == 0 or arr.shape[1] == 0:
            raise DimensionError("frame must be non-empty")
        if arr is self.rgb:
            arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "rgb", arr)

    @classmethod
    def from_colors(cls, colors) -> "Frame":
        """Build a frame from a ``(height, width)`` array of packed colors."""
        colors = np.asarray(colors, dtype=np.int64)
        rgb = np.stack([(colors >> 16) & 0xFF, (colors >> 8) & 0xFF, colors & 0xFF], axis=-1)
        return cls(rgb.astype(np.uint8))

    @classmethod
    def filled(cls, width: int, height: int, color: int) -> "Frame":
        return cls.from_colors(np.full((height, width), color, dtype=np.int64))

    @property
    def width(self) -> int:
        return self.rgb.shape[1]

    @property
    def height(self) -> int:
        return self.rgb.shape[0]

    @cached_property
    def colors(self) -> np.ndarray:
        """Read-only ``(height, width)`` array of packed colors."""
        c = self.rgb.astype(np.int64)
        packed = (c[..., 0] << 16) | (c[..., 1] << 8) | c[..., 2]
        packed.flags.writeable = False
        return packed

    def color_at(self, x: int, y: int) -> int:
        return int(self.colors[y, x])

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        return self.rgb.shape == other.rgb.shape and bool(np.array_equal(self.rgb, other.rgb))

    def __hash__(self):
        return hash((self.rgb.shape, self.rgb.tobytes()))


def downsample(f: Frame) -> Frame:
    """Halve both dimensions by keeping the top-left pixel of every 2x2 block.

    Averaging would blend sprite edges into new colors, so this is plain
    stride-2 subsampling.
    """
    if f.width % 2 or f.height % 2:
        raise DimensionError(f"cannot downsample {f.height}x{f.width} frame: dimensions must be even")
    return Frame(f.rgb[::2, ::2])


def framemax(f3: Frame, f4: Frame) -> Frame:
    """Per-pixel, per-channel maximum of two equally sized frames."""
    if f3.rgb.shape != f4.rgb.shape:
        raise DimensionError(
            f"frame sizes differ: {f3.height}x{f3.width} vs {f4.height}x{f4.width}"
        )
    return Frame(np.maximum(f3.rgb, f4.rgb))


_WS = b" \t\n\r\v\f"


def _read_header_token(data: bytes, pos: int) -> tuple[bytes, int, int]:
    """Next header token, its start offset and the offset just past it."""
    # skip whitespace and '#' comments
    while pos < len(data):
        ch = data[pos : pos + 1]
        if ch in (b" ", b"\t", b"\n", b"\r", b"\v", b"\f"):
            pos += 1
        elif ch == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        else:
            break
    start = pos
    while pos < len(data) and data[pos] not in _WS and data[pos : pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise ImageFormatError("unexpected end of header", start)
    return data[start:pos], start, pos


_DIGITS = re.compile(rb"[0-9]+\Z")


def decode_ppm(data: bytes) -> Frame:
    """Decode binary (``P6``) portable pixmap bytes with 8-bit channels."""
    if data[:2] != b"P6":
        raise ImageFormatError("unsupported format: expected magic 'P6'", 0)
    pos = 2
    values, starts = [], []
    for name in ("width", "height", "maxval"):
        token, start, pos = _read_header_token(data, pos)
        if not _DIGITS.match(token):
            raise ImageFormatError(f"invalid {name} {token!r}", start)
        values.append(int(token))
        starts.append(start)
    width, height, maxval = values
    if width <= 0 or height <= 0:
        raise ImageFormatError("frame dimensions must be positive", starts[0 if width <= 0 else 1])
    if maxval != 255:
        raise ImageFormatError(f"unsupported maxval {maxval}; only 8-bit channels", starts[2])
    if pos >= len(data) or data[pos] not in _WS:
        raise ImageFormatError("missing whitespace after header", pos)
    pos += 1
    expected = width * height * 3
    body = data[pos:]
    if len(body) < expected:
        raise ImageFormatError(
            f"truncated pixel data: expected {expected} bytes, found {len(body)}", len(data)
        )
    if len(body) > expected:
        raise ImageFormatError("trailing bytes after pixel data", pos + expected)
    rgb = np.frombuffer(body, dtype=np.uint8).reshape(height, width, 3)
    return Frame(rgb)


def encode_ppm(f: Frame) -> bytes:
    return b"P6\n%d %d\n255\n" % (f.width, f.height) + f.rgb.tobytes()


def read_image(path: str | os.PathLike) -> Frame:
    with open(path, "rb") as fh:
        return decode_ppm(fh.read())


def write_image(f: Frame, path: str | os.PathLike) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_ppm(f))
