"""Vision frontend: source images -> 96x96 grayscale int8 tensor.

Canonical input format is binary PGM (P5, maxval 255). Grayscale conversion
uses BT.601 luma weights; resampling is nearest-neighbor by default with
bilinear behind a flag. The detector input grid is int8 with zero_point -128
and scale 1/256.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dsp import round_half_away
from .errors import BadDimensions, BadImageFile, WrongSize

TARGET_SIZE = 96
IMAGE_SCALE = 1.0 / 256.0
IMAGE_ZERO_POINT = -128

# BT.601 luma weights
_LUMA_R, _LUMA_G, _LUMA_B = 0.299, 0.587, 0.114


@dataclass(frozen=True)
class GrayImage:
    """Row-major 8-bit grayscale image."""

    pixels: np.ndarray  # (height, width) uint8

    def __post_init__(self):
        pixels = np.asarray(self.pixels, dtype=np.uint8)
        if pixels.ndim != 2 or pixels.shape[0] < 1 or pixels.shape[1] < 1:
            raise BadDimensions(f"expected a nonempty 2-D image, got shape {pixels.shape}")
        object.__setattr__(self, "pixels", pixels)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


def to_grayscale(rgb: np.ndarray) -> GrayImage:
    """Interleaved 8-bit RGB (h, w, 3) -> BT.601 grayscale."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise BadDimensions(f"expected (h, w, 3) RGB, got shape {rgb.shape}")
    r, g, b = (rgb[..., i].astype(np.float64) for i in range(3))
    gray = round_half_away(_LUMA_R * r + _LUMA_G * g + _LUMA_B * b)
    return GrayImage(np.clip(gray, 0, 255).astype(np.uint8))


def _nearest_indices(out_size: int, in_size: int) -> np.ndarray:
    # center sampling: identity when out_size == in_size
    idx = np.floor((np.arange(out_size) + 0.5) * in_size / out_size).astype(np.int64)
    return np.clip(idx, 0, in_size - 1)


def resize_nearest(img: GrayImage, out_w: int = TARGET_SIZE, out_h: int = TARGET_SIZE) -> GrayImage:
    """Nearest-neighbor resample; bit-identical when already at target size."""
    rows = _nearest_indices(out_h, img.height)
    cols = _nearest_indices(out_w, img.width)
    return GrayImage(img.pixels[np.ix_(rows, cols)])


def resize_bilinear(img: GrayImage, out_w: int = TARGET_SIZE, out_h: int = TARGET_SIZE) -> GrayImage:
    """Bilinear resample (config alternative to nearest-neighbor)."""
    src = img.pixels.astype(np.float64)
    ys = (np.arange(out_h) + 0.5) * img.height / out_h - 0.5
    xs = (np.arange(out_w) + 0.5) * img.width / out_w - 0.5
    y0 = np.clip(np.floor(ys).astype(np.int64), 0, img.height - 1)
    x0 = np.clip(np.floor(xs).astype(np.int64), 0, img.width - 1)
    y1 = np.minimum(y0 + 1, img.height - 1)
    x1 = np.minimum(x0 + 1, img.width - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)[:, None]
    wx = np.clip(xs - x0, 0.0, 1.0)[None, :]
    top = src[np.ix_(y0, x0)] * (1 - wx) + src[np.ix_(y0, x1)] * wx
    bot = src[np.ix_(y1, x0)] * (1 - wx) + src[np.ix_(y1, x1)] * wx
    out = top * (1 - wy) + bot * wy
    return GrayImage(np.clip(round_half_away(out), 0, 255).astype(np.uint8))


def quantize_image(img: GrayImage) -> np.ndarray:
    """96x96 grayscale -> int8 (1, 96, 96, 1) tensor data, q = p - 128."""
    if img.pixels.shape != (TARGET_SIZE, TARGET_SIZE):
        raise WrongSize(f"expected {TARGET_SIZE}x{TARGET_SIZE}, got {img.pixels.shape}")
    q = img.pixels.astype(np.int16) - 128
    return q.astype(np.int8).reshape(1, TARGET_SIZE, TARGET_SIZE, 1)


def read_pgm(source: str | Path | bytes) -> GrayImage:
    """Decode a binary PGM (P5) stream with maxval 255."""
    data = Path(source).read_bytes() if isinstance(source, (str, Path)) else source
    pos = 0

    def next_token() -> bytes:
        nonlocal pos
        while pos < len(data):
            if data[pos:pos + 1].isspace():
                pos += 1
            elif data[pos:pos + 1] == b"#":
                while pos < len(data) and data[pos] != 0x0A:
                    pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise BadImageFile("truncated PGM header")
        return data[start:pos]

    if next_token() != b"P5":
        raise BadImageFile("not a binary PGM (P5) file")
    try:
        width, height, maxval = int(next_token()), int(next_token()), int(next_token())
    except ValueError as exc:
        raise BadImageFile(f"bad PGM header field: {exc}") from exc
    if maxval != 255:
        raise BadImageFile(f"only maxval 255 supported, got {maxval}")
    pos += 1  # single whitespace after maxval
    raster = data[pos:pos + width * height]
    if len(raster) != width * height:
        raise BadImageFile("PGM raster shorter than width*height")
    return GrayImage(np.frombuffer(raster, dtype=np.uint8).reshape(height, width))


def write_pgm(img: GrayImage, path: str | Path) -> None:
    """Encode a GrayImage as binary PGM (P5)."""
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + img.pixels.tobytes())
