"""phg: perceptual-hash matching with privacy-preserving reporting.

The package has two halves.  The first implements perceptual hash
functions (aHash-64 and PDQ-256), Hamming-distance matching, the square
pixel-grid codec for hashes, and a corpus evaluation harness.  The
second implements a token-based private set intersection in which a
reporting client never reveals its raw hashes: a content provider holds
an OPRF key and a precomputed token index, a coordinator hosts the index
and performs matching, and the client only ever sends blinded group
elements and final tokens.
"""

__version__ = "0.1.0"

from .phash import (  # noqa: F401
    HashAlgorithm,
    PerceptualHash,
    HashDistance,
    MatchPolicy,
    PdqResult,
    ahash,
    pdq,
    hamming,
    is_match,
)
from .imaging import ImageBuffer, TransformSpec  # noqa: F401
from .imaging import load_image, load_image_path, save_image  # noqa: F401
from .hashcodec import PixelGrid, encode_binary_grid, decode_grid  # noqa: F401
