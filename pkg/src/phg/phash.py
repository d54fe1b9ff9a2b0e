"""Perceptual hashes (aHash-64, PDQ-256) and normalized Hamming matching.

Hashes are fixed-length bit strings packed row-major, MSB-first within
each byte.  Distances are kept as exact rationals so threshold
comparisons never depend on float rounding.  The PDQ pipeline runs in
float32 with the same operation order as the public reference
implementation, which keeps digests stable across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .imaging import ImageBuffer, resize_box, to_luminance


class AlgorithmMismatchError(ValueError):
    """Raised when two hashes from different algorithms are compared."""


class HashAlgorithm(Enum):
    AHASH64 = "ahash64"
    PDQ256 = "pdq256"

    @property
    def bit_length(self) -> int:
        return 64 if self is HashAlgorithm.AHASH64 else 256

    @property
    def byte_length(self) -> int:
        return self.bit_length // 8

    @property
    def prefix(self) -> str:
        return self.value


_PREFIXES = {a.prefix: a for a in HashAlgorithm}


@dataclass(frozen=True)
class PerceptualHash:
    """A fixed-length perceptual hash digest.

    Bit i (row-major over the source grid) lives at the MSB end of byte
    i // 8, so digests print as big-endian hex.
    """

    algorithm: HashAlgorithm
    digest: bytes

    def __post_init__(self):
        if len(self.digest) != self.algorithm.byte_length:
            raise ValueError(
                "digest must be %d bytes for %s, got %d"
                % (self.algorithm.byte_length, self.algorithm.prefix, len(self.digest))
            )

    @property
    def bit_length(self) -> int:
        return self.algorithm.bit_length

    def bit(self, i: int) -> int:
        """Value of bit i, 0 <= i < bit_length."""
        if not 0 <= i < self.bit_length:
            raise IndexError(f"bit index {i} out of range")
        return (self.digest[i // 8] >> (7 - i % 8)) & 1

    def to_text(self) -> str:
        """Canonical text form, e.g. ``ahash64:ffffffffffffffff``."""
        return f"{self.algorithm.prefix}:{self.digest.hex()}"

    @classmethod
    def from_text(cls, text: str) -> "PerceptualHash":
        """Parse the ``<algorithm>:<hex>`` text form (case-insensitive hex)."""
        prefix, sep, hexpart = text.strip().partition(":")
        if not sep:
            raise ValueError(f"missing ':' in hash text {text!r}")
        algorithm = _PREFIXES.get(prefix.lower())
        if algorithm is None:
            raise ValueError(f"unknown hash algorithm {prefix!r}")
        try:
            digest = bytes.fromhex(hexpart)
        except ValueError:
            raise ValueError(f"invalid hex digest in {text!r}") from None
        if len(digest) != algorithm.byte_length:
            raise ValueError(
                "expected %d hex chars for %s, got %d"
                % (2 * algorithm.byte_length, prefix, len(hexpart))
            )
        return cls(algorithm=algorithm, digest=digest)

    def __str__(self) -> str:
        return self.to_text()


@dataclass(frozen=True)
class HashDistance:
    """Hamming distance between two k-bit hashes."""

    raw: int
    bit_length: int

    def __post_init__(self):
        if not 0 <= self.raw <= self.bit_length:
            raise ValueError("raw distance out of [0, k]")

    @property
    def normalized(self) -> Fraction:
        """The exact normalized distance raw / k."""
        return Fraction(self.raw, self.bit_length)


@dataclass(frozen=True)
class MatchPolicy:
    """Per-algorithm normalized distance thresholds.

    Two hashes match when their normalized distance is strictly below
    the threshold for their algorithm.
    """

    ahash64_threshold: Fraction = Fraction(10, 64)
    pdq256_threshold: Fraction = Fraction(31, 256)

    def __post_init__(self):
        for t in (self.ahash64_threshold, self.pdq256_threshold):
            if not 0 < t < 1:
                raise ValueError("thresholds must lie in (0, 1)")

    def threshold(self, algorithm: HashAlgorithm) -> Fraction:
        if algorithm is HashAlgorithm.AHASH64:
            return self.ahash64_threshold
        return self.pdq256_threshold


@dataclass(frozen=True)
class PdqResult:
    """A PDQ-256 hash together with its gradient-based quality score."""

    hash: PerceptualHash
    quality: int

    def __post_init__(self):
        if self.hash.algorithm is not HashAlgorithm.PDQ256:
            raise ValueError("PdqResult requires a PDQ256 hash")
        if not 0 <= self.quality <= 100:
            raise ValueError("quality must be in [0, 100]")


def _pack_bits(bits: np.ndarray) -> bytes:
    return np.packbits(bits.astype(np.uint8)).tobytes()


# ---------------------------------------------------------------------------
# aHash-64


def ahash(img: ImageBuffer) -> PerceptualHash:
    """Average hash: 8x8 box downsample, bit = sample >= mean.

    The mean comparison is exact (integer cross-multiplication), and the
    >= tie-break maps every constant image to the all-ones hash.
    """
    small = resize_box(to_luminance(img), 8, 8).to_array()[:, :, 0]
    samples = small.astype(np.int64).ravel()
    total = int(samples.sum())
    bits = 64 * samples >= total  # sample >= total/64, exactly
    return PerceptualHash(HashAlgorithm.AHASH64, _pack_bits(bits))


# ---------------------------------------------------------------------------
# PDQ-256
#
# Float32 throughout, with the reference's operation order: a two-pass
# running-sum box filter (window ceil(dim/128) per pass), decimation at
# cell centers, a 16x64 DCT applied on both sides with sequential
# accumulation, and a strict > comparison against the lower median.


def _box_filter_lines(lines: np.ndarray, window: int) -> np.ndarray:
    """Running-sum box filter along axis 1 of a float32 (m, n) array.

    Windows are clipped at both ends, so output positions near the edges
    average fewer samples.  The accumulate/subtract order matches the
    reference scalar loop, applied to all m lines in lockstep.
    """
    m, n = lines.shape
    out = np.empty_like(lines)
    half = (window + 2) // 2
    phase1 = half - 1
    phase2 = window - half + 1
    phase3 = n - window
    phase4 = half - 1
    s = np.zeros(m, dtype=np.float32)
    li = ri = oi = 0
    cur = 0
    for _ in range(phase1):
        s += lines[:, ri]
        cur += 1
        ri += 1
    for _ in range(phase2):
        s += lines[:, ri]
        cur += 1
        out[:, oi] = s / np.float32(cur)
        ri += 1
        oi += 1
    for _ in range(phase3):
        s += lines[:, ri]
        s -= lines[:, li]
        out[:, oi] = s / np.float32(cur)
        ri += 1
        li += 1
        oi += 1
    for _ in range(phase4):
        s -= lines[:, li]
        cur -= 1
        out[:, oi] = s / np.float32(cur)
        li += 1
        oi += 1
    return out


def _downsample_64x64(luma: np.ndarray) -> np.ndarray:
    """Two filter passes then center-point decimation to 64x64 float32."""
    nrows, ncols = luma.shape
    window_along_rows = (ncols + 127) // 128
    window_along_cols = (nrows + 127) // 128
    buf = luma.astype(np.float32)
    for _ in range(2):
        buf = _box_filter_lines(buf, window_along_rows)
        buf = _box_filter_lines(buf.T, window_along_cols).T
    ri = (((np.arange(64) + 0.5) * nrows) / 64).astype(np.int64)
    ci = (((np.arange(64) + 0.5) * ncols) / 64).astype(np.int64)
    return buf[np.ix_(ri, ci)]


@lru_cache(maxsize=1)
def _dct_matrix_f32() -> np.ndarray:
    scale = float(np.float32(np.sqrt(2.0 / 64.0)))
    f = np.arange(1, 17, dtype=np.float64)[:, np.newaxis]
    u = np.arange(64, dtype=np.float64)[np.newaxis, :]
    m = scale * np.cos((np.pi / 2.0 / 64.0) * f * (2.0 * u + 1.0))
    m = m.astype(np.float32)
    m.setflags(write=False)
    return m

def _dct16_f32(a64: np.ndarray) -> np.ndarray:
    d = _dct_matrix_f32()
    t = np.zeros((16, 64), dtype=np.float32)
    for k in range(64):
        t += d[:, k : k + 1] * a64[k : k + 1, :]
    b = np.zeros((16, 16), dtype=np.float32)
    for k in range(64):
        b += t[:, k : k + 1] * d[:, k : k + 1].T
    return b


def dct16_from64(block: np.ndarray) -> np.ndarray:
    """2-D DCT-II slice of a 64x64 block, keeping frequencies 1..16.

    out[i][j] = sum_{u,v} block[u][v] * c_{i+1}(u) * c_{j+1}(v) with
    c_f(u) = sqrt(2/64) * cos(pi * f * (2u+1) / 128); the DC basis is
    excluded.  Computed in float64; the hashing path uses a float32
    variant with reference-compatible rounding.
    """
    a = np.asarray(block, dtype=np.float64)
    if a.shape != (64, 64):
        raise ValueError("expected a 64x64 block")
    f = np.arange(1, 17, dtype=np.float64)[:, np.newaxis]
    u = np.arange(64, dtype=np.float64)[np.newaxis, :]
    d = np.sqrt(2.0 / 64.0) * np.cos((np.pi / 128.0) * f * (2.0 * u + 1.0))
    return d @ a @ d.T


def pdq(img: ImageBuffer) -> PdqResult:
    """PDQ-256 hash plus quality.

    Quality counts adjacent 64x64 luma differences with |delta| > 2,
    scaled to [0, 100]; inputs narrower than 16 pixels in either
    dimension are hashed anyway but flagged with quality 0.
    """
    luma = to_luminance(img).to_array()[:, :, 0]
    d64 = _downsample_64x64(luma)

    gradient_count = int(np.count_nonzero(np.abs(np.diff(d64, axis=0)) > 2)) + int(
        np.count_nonzero(np.abs(np.diff(d64, axis=1)) > 2)
    )
    gradient_max = 2 * 64 * 63
    quality = (200 * gradient_count + gradient_max) // (2 * gradient_max)  # round half up
    quality = max(0, min(100, quality))
    if min(img.width, img.height) < 16:
        quality = 0

    if d64.min() == d64.max():
        # constant block: every retained DCT coefficient is exactly zero,
        # so the strict > median rule gives the all-zeros hash
        return PdqResult(
            hash=PerceptualHash(HashAlgorithm.PDQ256, bytes(32)), quality=quality
        )

    coeffs = _dct16_f32(d64)
    flat = coeffs.ravel()
    median = np.partition(flat, 127)[127]  # lower median of 256 values
    bits = (flat > median)
    return PdqResult(
        hash=PerceptualHash(HashAlgorithm.PDQ256, _pack_bits(bits)),
        quality=quality,
    )


# ---------------------------------------------------------------------------
# Distances and matching


def hamming(a: PerceptualHash, b: PerceptualHash) -> HashDistance:
    """Hamming distance between two same-algorithm hashes."""
    if a.algorithm is not b.algorithm:
        raise AlgorithmMismatchError(
            f"cannot compare {a.algorithm.prefix} with {b.algorithm.prefix}"
        )
    x = int.from_bytes(a.digest, "big") ^ int.from_bytes(b.digest, "big")
    return HashDistance(raw=x.bit_count(), bit_length=a.bit_length)


def is_match(a: PerceptualHash, b: PerceptualHash, policy: MatchPolicy | None = None) -> bool:
    """True when the normalized distance is strictly below the threshold."""
    if policy is None:
        policy = MatchPolicy()
    return hamming(a, b).normalized < policy.threshold(a.algorithm)
