"""Deterministic image decoding, luminance conversion, and resampling.

Everything here is pinned to integer arithmetic with round-half-up so
that equal inputs produce bitwise-equal outputs on every platform.  The
mandatory bit-exact interchange formats are binary PGM (P5) and PPM (P6)
with maxval 255; PNG decoding delegates to Pillow.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np


class MalformedFileError(ValueError):
    """Raised for truncated input, bad magic, or inconsistent headers."""


class UnsupportedVariantError(ValueError):
    """Raised for syntactically valid files this codec does not handle."""


class ImageFormat(Enum):
    PGM = "pgm"
    PPM = "ppm"
    PNG = "png"


@dataclass(frozen=True)
class ImageBuffer:
    """An 8-bit image: row-major interleaved samples, 1 or 3 channels."""

    width: int
    height: int
    channels: int
    data: bytes

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be >= 1")
        if self.channels not in (1, 3):
            raise ValueError("channels must be 1 (luma) or 3 (RGB)")
        if len(self.data) != self.width * self.height * self.channels:
            raise ValueError(
                "data length %d != %d x %d x %d"
                % (len(self.data), self.width, self.height, self.channels)
            )

    def to_array(self) -> np.ndarray:
        """Return an (height, width, channels) uint8 view of the samples."""
        arr = np.frombuffer(self.data, dtype=np.uint8)
        return arr.reshape(self.height, self.width, self.channels)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "ImageBuffer":
        """Build a buffer from an (h, w) or (h, w, c) uint8 array."""
        if arr.ndim == 2:
            arr = arr[:, :, np.newaxis]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise ValueError("expected (h, w) or (h, w, 1|3) array")
        if arr.dtype != np.uint8:
            raise ValueError("expected uint8 samples")
        h, w, c = arr.shape
        return cls(width=w, height=h, channels=c, data=arr.tobytes())


class TransformKind(Enum):
    GRAYSCALE = "grayscale"
    RESIZE = "resize"
    BRIGHTNESS_SHIFT = "brightness_shift"
    BOX_BLUR = "box_blur"
    CENTER_CROP = "center_crop"
    MIRROR_HORIZONTAL = "mirror_horizontal"


@dataclass(frozen=True)
class TransformSpec:
    """A mild, deterministic image edit used by robustness testing.

    Rotation is deliberately absent: neither hash family implemented in
    this package is rotation-invariant, so testing it would measure the
    algorithm rather than the implementation.
    """

    kind: TransformKind
    width: int | None = None
    height: int | None = None
    delta: int | None = None
    radius: int | None = None
    fraction: float | None = None

    def __post_init__(self):
        k = self.kind
        if k is TransformKind.RESIZE:
            if not (self.width and self.height and self.width >= 1 and self.height >= 1):
                raise ValueError("resize requires width, height >= 1")
        elif k is TransformKind.BRIGHTNESS_SHIFT:
            if self.delta is None or not -64 <= self.delta <= 64:
                raise ValueError("brightness delta must be in [-64, 64]")
        elif k is TransformKind.BOX_BLUR:
            if self.radius not in (1, 2, 3):
                raise ValueError("blur radius must be 1, 2, or 3")
        elif k is TransformKind.CENTER_CROP:
            if self.fraction is None or not 0.8 <= self.fraction < 1.0:
                raise ValueError("crop fraction must be in [0.8, 1.0)")

    @classmethod
    def grayscale(cls) -> "TransformSpec":
        return cls(TransformKind.GRAYSCALE)

    @classmethod
    def resize(cls, width: int, height: int) -> "TransformSpec":
        return cls(TransformKind.RESIZE, width=width, height=height)

    @classmethod
    def brightness_shift(cls, delta: int) -> "TransformSpec":
        return cls(TransformKind.BRIGHTNESS_SHIFT, delta=delta)

    @classmethod
    def box_blur(cls, radius: int) -> "TransformSpec":
        return cls(TransformKind.BOX_BLUR, radius=radius)

    @classmethod
    def center_crop(cls, fraction: float) -> "TransformSpec":
        return cls(TransformKind.CENTER_CROP, fraction=fraction)

    @classmethod
    def mirror_horizontal(cls) -> "TransformSpec":
        return cls(TransformKind.MIRROR_HORIZONTAL)

    def describe(self) -> str:
        k = self.kind
        if k is TransformKind.RESIZE:
            return f"resize({self.width}x{self.height})"
        if k is TransformKind.BRIGHTNESS_SHIFT:
            return f"brightness({self.delta:+d})"
        if k is TransformKind.BOX_BLUR:
            return f"box_blur({self.radius})"
        if k is TransformKind.CENTER_CROP:
            return f"center_crop({self.fraction})"
        return k.value


# ---------------------------------------------------------------------------
# PGM / PPM / PNG codecs


def _parse_netpbm_header(data: bytes, magic: bytes):
    """Parse 'P5'/'P6' header; returns (width, height, raster offset)."""
    if data[:2] != magic:
        raise MalformedFileError(f"bad magic, expected {magic.decode()}")
    pos = 2
    fields = []
    while len(fields) < 3:
        if pos >= len(data):
            raise MalformedFileError("truncated header")
        c = data[pos : pos + 1]
        if c.isspace():
            pos += 1
        elif c == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isdigit():
            start = pos
            while pos < len(data) and data[pos : pos + 1].isdigit():
                pos += 1
            fields.append(int(data[start:pos]))
        else:
            raise MalformedFileError(f"unexpected byte {c!r} in header")
    # exactly one whitespace byte separates the header from the raster
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise MalformedFileError("missing whitespace before raster")
    pos += 1
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise MalformedFileError("non-positive dimensions")
    if maxval != 255:
        raise UnsupportedVariantError(f"maxval {maxval} unsupported (only 255)")
    return width, height, pos


def _load_netpbm(data: bytes, magic: bytes, channels: int) -> ImageBuffer:
    width, height, pos = _parse_netpbm_header(data, magic)
    n = width * height * channels
    raster = data[pos : pos + n]
    if len(raster) < n:
        raise MalformedFileError(f"raster truncated: {len(raster)} of {n} bytes")
    return ImageBuffer(width=width, height=height, channels=channels, data=raster)


def _load_png(data: bytes) -> ImageBuffer:
    from PIL import Image, UnidentifiedImageError

    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except UnidentifiedImageError as e:
        raise MalformedFileError(f"not a decodable PNG: {e}") from None
    except OSError as e:
        raise MalformedFileError(f"PNG decode failed: {e}") from None
    if img.mode == "P":
        img = img.convert("RGB")
    if img.mode == "L":
        channels = 1
    elif img.mode == "RGB":
        channels = 3
    else:
        raise UnsupportedVariantError(f"PNG mode {img.mode} unsupported (use 8-bit L or RGB)")
    arr = np.asarray(img, dtype=np.uint8)
    if arr.ndim == 2:
        arr = arr[:, :, np.newaxis]
    return ImageBuffer(width=img.width, height=img.height, channels=channels, data=arr.tobytes())


def load_image(data: bytes, fmt: ImageFormat) -> ImageBuffer:
    """Decode a PGM (P5), PPM (P6), or PNG byte string.

    PGM/PPM decoding is bit-exact: the returned samples are exactly the
    raster bytes.  Raises MalformedFileError or UnsupportedVariantError.
    """
    if fmt is ImageFormat.PGM:
        return _load_netpbm(data, b"P5", 1)
    if fmt is ImageFormat.PPM:
        return _load_netpbm(data, b"P6", 3)
    if fmt is ImageFormat.PNG:
        return _load_png(data)
    raise ValueError(f"unknown format {fmt}")


_SUFFIX_FORMATS = {".pgm": ImageFormat.PGM, ".ppm": ImageFormat.PPM, ".png": ImageFormat.PNG}


def load_image_path(path) -> ImageBuffer:
    """Load a file, inferring the format from its suffix."""
    import os

    suffix = os.path.splitext(str(path))[1].lower()
    fmt = _SUFFIX_FORMATS.get(suffix)
    if fmt is None:
        raise UnsupportedVariantError(f"unknown image suffix {suffix!r}")
    with open(path, "rb") as f:
        return load_image(f.read(), fmt)


def save_image(img: ImageBuffer) -> bytes:
    """Encode as canonical binary PGM (1-channel) or PPM (3-channel).

    Canonical form: ``P5\\n<w> <h>\\n255\\n`` + raster, so that
    load_image(save_image(img)) roundtrips bitwise.
    """
    magic = b"P5" if img.channels == 1 else b"P6"
    header = b"%s\n%d %d\n255\n" % (magic, img.width, img.height)
    return header + img.data


# ---------------------------------------------------------------------------
# Pixel operations


def _round_half_up_div(num: np.ndarray, den: int) -> np.ndarray:
    # round-half-up of num/den on nonnegative integers, elementwise
    return (2 * num + den) // (2 * den)


def to_luminance(img: ImageBuffer) -> ImageBuffer:
    """Rec.601 luma: round(0.299 R + 0.587 G + 0.114 B), clamped.

    Identity on 1-channel input.  Integer arithmetic keeps the result
    platform-independent.
    """
    if img.channels == 1:
        return img
    arr = img.to_array().astype(np.int64)
    num = 299 * arr[:, :, 0] + 587 * arr[:, :, 1] + 114 * arr[:, :, 2]
    luma = np.clip(_round_half_up_div(num, 1000), 0, 255).astype(np.uint8)
    return ImageBuffer.from_array(luma)


def _overlap_weights(n_in: int, n_out: int) -> np.ndarray:
    """Integer overlap weights between output cells and input pixels.

    Row i of the (n_out, n_in) result holds, for each input pixel, the
    length of its overlap with output cell i, scaled by n_out so every
    weight is an integer.  Each row sums to n_in.
    """
    w = np.zeros((n_out, n_in), dtype=np.int64)
    for i in range(n_out):
        lo, hi = i * n_in, (i + 1) * n_in  # cell bounds scaled by n_out
        u0 = lo // n_out
        u1 = -(-hi // n_out)  # ceil
        for u in range(u0, min(u1, n_in)):
            w[i, u] = min(hi, (u + 1) * n_out) - max(lo, u * n_out)
    return w


def _resize_box_array(arr: np.ndarray, w: int, h: int) -> np.ndarray:
    """Area-average a (H, W) integer array to (h, w), round-half-up."""
    H, W = arr.shape
    rw = _overlap_weights(H, h)
    cw = _overlap_weights(W, w)
    num = rw @ arr.astype(np.int64) @ cw.T
    return _round_half_up_div(num, H * W).astype(np.uint8)


def resize_box(img: ImageBuffer, w: int, h: int) -> ImageBuffer:
    """Box (area-average) resample of a luma image to w x h."""
    if img.channels != 1:
        raise ValueError("resize_box expects a 1-channel image")
    if w < 1 or h < 1:
        raise ValueError("target dimensions must be >= 1")
    if (w, h) == (img.width, img.height):
        return img
    out = _resize_box_array(img.to_array()[:, :, 0], w, h)
    return ImageBuffer.from_array(out)


def _box_blur_channel(ch: np.ndarray, radius: int) -> np.ndarray:
    # mean over the window clipped to the image, round-half-up
    H, W = ch.shape
    padded = np.zeros((H + 1, W + 1), dtype=np.int64)
    padded[1:, 1:] = ch
    sat = padded.cumsum(axis=0).cumsum(axis=1)
    r = radius
    out = np.empty((H, W), dtype=np.uint8)
    ys = np.arange(H)
    y0 = np.clip(ys - r, 0, H)
    y1 = np.clip(ys + r + 1, 0, H)
    xs = np.arange(W)
    x0 = np.clip(xs - r, 0, W)
    x1 = np.clip(xs + r + 1, 0, W)
    for y in range(H):
        sums = sat[y1[y], x1] - sat[y0[y], x1] - sat[y1[y], x0] + sat[y0[y], x0]
        counts = (y1[y] - y0[y]) * (x1 - x0)
        out[y] = (2 * sums + counts) // (2 * counts)
    return out


def apply_transform(img: ImageBuffer, t: TransformSpec) -> ImageBuffer:
    """Apply one TransformSpec; always yields a valid ImageBuffer."""
    k = t.kind
    if k is TransformKind.GRAYSCALE:
        return to_luminance(img)

    if k is TransformKind.RESIZE:
        arr = img.to_array()
        chans = [_resize_box_array(arr[:, :, c], t.width, t.height) for c in range(img.channels)]
        return ImageBuffer.from_array(np.stack(chans, axis=2))

    if k is TransformKind.BRIGHTNESS_SHIFT:
        arr = img.to_array().astype(np.int64) + t.delta
        return ImageBuffer.from_array(np.clip(arr, 0, 255).astype(np.uint8))

    if k is TransformKind.BOX_BLUR:
        arr = img.to_array()
        chans = [_box_blur_channel(arr[:, :, c].astype(np.int64), t.radius) for c in range(img.channels)]
        return ImageBuffer.from_array(np.stack(chans, axis=2))

    if k is TransformKind.CENTER_CROP:
        new_w = max(1, int(math.floor(t.fraction * img.width)))
        new_h = max(1, int(math.floor(t.fraction * img.height)))
        x0 = (img.width - new_w) // 2
        y0 = (img.height - new_h) // 2
        arr = img.to_array()[y0 : y0 + new_h, x0 : x0 + new_w, :]
        return ImageBuffer.from_array(np.ascontiguousarray(arr))

    if k is TransformKind.MIRROR_HORIZONTAL:
        arr = img.to_array()[:, ::-1, :]
        return ImageBuffer.from_array(np.ascontiguousarray(arr))

    raise ValueError(f"unknown transform {t.kind}")
