"""8-bit RGB rasters: binary PPM (P6) codec, box cropping and channel means."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .annot_io import AbsBox
from .errors import EmptyRegionError, LengthError, ParseError, RangeError, UnsupportedError


@dataclass(frozen=True, eq=False)
class ImageRGB:
    """Immutable row-major RGB image; ``pixels`` has shape (height, width, 3), dtype uint8."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise RangeError(f"pixel array must be (height, width, 3), got {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise RangeError(f"image must be at least 1x1, got {px.shape[1]}x{px.shape[0]}")
        if px.dtype != np.uint8:
            if np.any((px < 0) | (px > 255)):
                raise RangeError("channel values must lie in [0, 255]")
            px = px.astype(np.uint8)
        px = px.copy() if px.flags.writeable else px
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ImageRGB):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(np.array_equal(self.pixels, other.pixels))

    def __hash__(self) -> int:
        return hash((self.pixels.shape, self.pixels.tobytes()))


@dataclass(frozen=True)
class MeanRGB:
    r: float
    g: float
    b: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.r, self.g, self.b)


def _header_token(data: bytes, pos: int) -> tuple[bytes, int]:
    # PPM headers allow '#' comments between tokens
    n = len(data)
    while pos < n:
        c = data[pos:pos + 1]
        if c.isspace():
            pos += 1
        elif c == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise ParseError("truncated PPM header")
    return data[start:pos], pos


def read_ppm(data: bytes) -> ImageRGB:
    if data[:2] != b"P6":
        raise ParseError(f"not a binary PPM: magic {data[:2]!r}, expected b'P6'")
    pos = 2
    fields = []
    for _ in range(3):
        tok, pos = _header_token(data, pos)
        if not tok.isdigit():
            raise ParseError(f"invalid PPM header field {tok!r}")
        fields.append(int(tok))
    width, height, maxval = fields
    if maxval != 255:
        raise UnsupportedError(f"PPM maxval {maxval} unsupported; only 255")
    if width < 1 or height < 1:
        raise ParseError(f"invalid PPM dimensions {width}x{height}")
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise ParseError("missing whitespace after PPM maxval")
    pos += 1
    expected = width * height * 3
    payload = data[pos:pos + expected]
    if len(payload) != expected:
        raise LengthError(f"PPM payload has {len(payload)} bytes, expected {expected}")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
    return ImageRGB(pixels)


def write_ppm(img: ImageRGB) -> bytes:
    header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.pixels.tobytes()


def box_pixel_bounds(img: ImageRGB, box: AbsBox) -> tuple[int, int, int, int]:
    """Pixel index window ``(col0, row0, col1, row1)``, half-open, covered by ``box``.

    Fractional edges expand outward: columns floor(x_min)..ceil(x_max)-1.
    """
    c0 = max(math.floor(box.x_min), 0)
    r0 = max(math.floor(box.y_min), 0)
    c1 = min(math.ceil(box.x_max), img.width)
    r1 = min(math.ceil(box.y_max), img.height)
    if c1 <= c0 or r1 <= r0:
        # a zero-width box on integer coordinates still selects one column/row
        if c0 < img.width and r0 < img.height and c1 >= c0 and r1 >= r0:
            c1 = max(c1, c0 + 1)
            r1 = max(r1, r0 + 1)
        else:
            raise EmptyRegionError(f"box {box.as_tuple()} lies outside the {img.width}x{img.height} image")
    return c0, r0, c1, r1


def crop(img: ImageRGB, box: AbsBox) -> ImageRGB:
    c0, r0, c1, r1 = box_pixel_bounds(img, box)
    return ImageRGB(img.pixels[r0:r1, c0:c1])


def mean_rgb(img: ImageRGB) -> MeanRGB:
    # uint64 accumulation is exact for any image that fits in memory
    sums = img.pixels.reshape(-1, 3).sum(axis=0, dtype=np.uint64)
    n = img.width * img.height
    return MeanRGB(int(sums[0]) / n, int(sums[1]) / n, int(sums[2]) / n)
