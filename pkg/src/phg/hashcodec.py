"""Hashes as square pixel grids, and back.

A k-bit hash becomes a sqrt(k) x sqrt(k) black-and-white grid (bit 1 is
white), and arbitrary byte strings become grayscale grids one octet per
sample.  Decoding thresholds at 128 so it stays total on noisy grids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .imaging import ImageBuffer
from .phash import HashAlgorithm, PerceptualHash


class NonSquareBitLengthError(ValueError):
    """Hash bit count is not a perfect square."""


class NonSquareLengthError(ValueError):
    """Byte string length is not a perfect square."""


class DimensionMismatchError(ValueError):
    """Grid size does not match the requested algorithm's bit count."""


class GridMode(Enum):
    BINARY = "binary"
    BYTE = "byte"


@dataclass(frozen=True)
class PixelGrid:
    """A square grid of 8-bit samples, row-major."""

    side: int
    samples: bytes
    mode: GridMode

    def __post_init__(self):
        if self.side < 1:
            raise ValueError("side must be >= 1")
        if len(self.samples) != self.side * self.side:
            raise ValueError(
                "expected %d samples, got %d" % (self.side * self.side, len(self.samples))
            )
        if self.mode is GridMode.BINARY and any(s not in (0, 255) for s in self.samples):
            raise ValueError("binary grids may only contain 0 and 255")

    def to_array(self) -> np.ndarray:
        return np.frombuffer(self.samples, dtype=np.uint8).reshape(self.side, self.side)

    def to_image(self) -> ImageBuffer:
        """The grid as a 1-channel image, ready for PGM export."""
        return ImageBuffer(width=self.side, height=self.side, channels=1, data=self.samples)


def _square_side(n: int) -> int | None:
    side = math.isqrt(n)
    return side if side * side == n else None


def encode_binary_grid(h: PerceptualHash) -> PixelGrid:
    """One pixel per bit: 1 -> 255 (white), 0 -> 0 (black), bit 0 top-left."""
    side = _square_side(h.bit_length)
    if side is None:
        raise NonSquareBitLengthError(f"{h.bit_length} bits do not form a square grid")
    unpacked = np.unpackbits(np.frombuffer(h.digest, dtype=np.uint8))
    return PixelGrid(side=side, samples=(unpacked * 255).tobytes(), mode=GridMode.BINARY)


def encode_byte_grid(data: bytes) -> PixelGrid:
    """One grayscale pixel per octet, row-major."""
    side = _square_side(len(data))
    if side is None:
        raise NonSquareLengthError(f"{len(data)} bytes do not form a square grid")
    return PixelGrid(side=side, samples=bytes(data), mode=GridMode.BYTE)


def decode_grid(grid: PixelGrid, algorithm: HashAlgorithm) -> PerceptualHash:
    """Threshold a grid back into a hash: sample >= 128 -> bit 1."""
    if grid.side * grid.side != algorithm.bit_length:
        raise DimensionMismatchError(
            "grid of %d pixels cannot hold a %d-bit %s hash"
            % (grid.side * grid.side, algorithm.bit_length, algorithm.prefix)
        )
    bits = np.frombuffer(grid.samples, dtype=np.uint8) >= 128
    return PerceptualHash(algorithm, np.packbits(bits).tobytes())
