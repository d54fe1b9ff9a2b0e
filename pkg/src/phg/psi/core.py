"""OPRF tokens, provider indexes, and the unbalanced intersection.

The protocol is a blinded-exponentiation OPRF: the provider holds a
scalar key k, a hash h maps to the group element G_h, and its token is
SHA-256(text(h) || encode(G_h^k)).  Clients learn tokens for their own
hashes via blinding (two exponentiations and one inversion per item,
independent of the provider set size); the provider precomputes its
whole index offline.
"""

from __future__ import annotations

import hashlib
import json
import secrets
from bisect import bisect_left
from dataclasses import dataclass

from ..phash import HashAlgorithm, PerceptualHash
from .group import GroupOps, ZeroScalarError


class MixedAlgorithmsError(ValueError):
    """A hash collection mixes algorithms."""


class IndexFormatError(ValueError):
    """A serialized token index is malformed."""


TOKEN_LEN = 32

_ALGORITHM_CODES = {HashAlgorithm.AHASH64: 1, HashAlgorithm.PDQ256: 2}
_CODE_ALGORITHMS = {v: k for k, v in _ALGORITHM_CODES.items()}


@dataclass(frozen=True, order=True)
class Token:
    """A 32-octet pseudorandom stand-in for one perceptual hash."""

    value: bytes

    def __post_init__(self):
        if len(self.value) != TOKEN_LEN:
            raise ValueError(f"tokens are {TOKEN_LEN} octets")


@dataclass(frozen=True)
class OprfKey:
    """Provider-held OPRF key: a nonzero scalar plus an 8-octet id."""

    scalar: int
    key_id: bytes

    def __post_init__(self):
        if self.scalar <= 0:
            raise ZeroScalarError("OPRF key scalar must be a positive integer")
        if len(self.key_id) != 8:
            raise ValueError("key id must be 8 octets")

    @classmethod
    def generate(cls, group: GroupOps, key_id: bytes | None = None) -> "OprfKey":
        if key_id is None:
            key_id = secrets.token_bytes(8)
        return cls(scalar=group.scalar_random(), key_id=key_id)


def save_key(path, key: OprfKey, group: GroupOps) -> None:
    """Write a key file (JSON: group name, key id, scalar)."""
    doc = {
        "group": group.name,
        "key_id": key.key_id.hex(),
        "scalar": hex(key.scalar),
    }
    with open(path, "w") as f:
        json.dump(doc, f)
        f.write("\n")


def load_key(path) -> tuple[OprfKey, str]:
    """Read a key file; returns (key, group name)."""
    with open(path) as f:
        doc = json.load(f)
    return (
        OprfKey(scalar=int(doc["scalar"], 16), key_id=bytes.fromhex(doc["key_id"])),
        doc["group"],
    )


# ---------------------------------------------------------------------------
# OPRF steps


def _hash_point(group: GroupOps, h: PerceptualHash):
    return group.hash_to_group(h.to_text().encode("ascii"))


def blind(group: GroupOps, h: PerceptualHash, r: int):
    """Client step 1: the hash's group element raised to the blinding r."""
    if r % group.order == 0:
        raise ZeroScalarError("blinding scalar is zero")
    return group.exp(_hash_point(group, h), r)


def evaluate(group: GroupOps, blinded, key: OprfKey):
    """Provider step: raise a blinded element to the OPRF key."""
    return group.exp(blinded, key.scalar)


def unblind_finalize(group: GroupOps, evaluated, r: int, h: PerceptualHash) -> Token:
    """Client step 2: strip the blinding and digest into a token."""
    unblinded = group.exp(evaluated, group.scalar_invert(r))
    return _finalize(group, h, unblinded)


def _finalize(group: GroupOps, h: PerceptualHash, element) -> Token:
    text = h.to_text().encode("ascii")
    return Token(hashlib.sha256(text + group.encode(element)).digest())


def token_for(group: GroupOps, h: PerceptualHash, key: OprfKey) -> Token:
    """Direct token computation (provider side, no blinding)."""
    return _finalize(group, h, group.exp(_hash_point(group, h), key.scalar))


# ---------------------------------------------------------------------------
# Client and provider state


def _common_algorithm(hashes) -> HashAlgorithm:
    algorithms = {h.algorithm for h in hashes}
    if len(algorithms) > 1:
        raise MixedAlgorithmsError(
            "mixed algorithms: " + ", ".join(sorted(a.prefix for a in algorithms))
        )
    return next(iter(algorithms))


@dataclass(frozen=True)
class ClientSet:
    """The client's hashes with one fresh blinding scalar per item."""

    hashes: tuple[PerceptualHash, ...]
    scalars: tuple[int, ...]

    def __post_init__(self):
        if not self.hashes:
            raise ValueError("client set must hold at least one hash")
        if len(self.scalars) != len(self.hashes):
            raise ValueError("one blinding scalar per hash required")
        _common_algorithm(self.hashes)

    @classmethod
    def create(cls, group: GroupOps, hashes) -> "ClientSet":
        """Draw fresh nonzero blinding scalars for a new session."""
        hashes = tuple(hashes)
        return cls(hashes=hashes, scalars=tuple(group.scalar_random() for _ in hashes))

    @property
    def algorithm(self) -> HashAlgorithm:
        return self.hashes[0].algorithm


@dataclass(frozen=True)
class TokenIndex:
    """A provider's sorted, deduplicated token set."""

    algorithm: HashAlgorithm
    key_id: bytes
    tokens: tuple[bytes, ...]

    def __post_init__(self):
        if len(self.key_id) != 8:
            raise ValueError("key id must be 8 octets")
        for i, t in enumerate(self.tokens):
            if len(t) != TOKEN_LEN:
                raise ValueError("token %d has length %d" % (i, len(t)))
            if i and not self.tokens[i - 1] < t:
                raise ValueError("tokens must be strictly ascending")

    def __len__(self) -> int:
        return len(self.tokens)

    def contains(self, token: Token) -> bool:
        """Binary-search membership."""
        i = bisect_left(self.tokens, token.value)
        return i < len(self.tokens) and self.tokens[i] == token.value

    # -- PHIX serialization (magic, version, algorithm, token_len, key id,
    #    count, then the sorted tokens)

    MAGIC = b"PHIX"
    VERSION = 1

    def to_bytes(self) -> bytes:
        head = (
            self.MAGIC
            + bytes([self.VERSION, _ALGORITHM_CODES[self.algorithm], TOKEN_LEN])
            + self.key_id
            + len(self.tokens).to_bytes(8, "little")
        )
        return head + b"".join(self.tokens)

    @classmethod
    def from_bytes(cls, data: bytes) -> "TokenIndex":
        if len(data) < 23:
            raise IndexFormatError("truncated header")
        if data[:4] != cls.MAGIC:
            raise IndexFormatError("bad magic")
        version, algo_code, token_len = data[4], data[5], data[6]
        if version != cls.VERSION:
            raise IndexFormatError(f"unsupported version {version}")
        algorithm = _CODE_ALGORITHMS.get(algo_code)
        if algorithm is None:
            raise IndexFormatError(f"unknown algorithm code {algo_code}")
        if token_len != TOKEN_LEN:
            raise IndexFormatError(f"unsupported token length {token_len}")
        key_id = data[7:15]
        count = int.from_bytes(data[15:23], "little")
        body = data[23:]
        if len(body) != count * TOKEN_LEN:
            raise IndexFormatError(
                "expected %d token octets, found %d" % (count * TOKEN_LEN, len(body))
            )
        tokens = tuple(body[i * TOKEN_LEN : (i + 1) * TOKEN_LEN] for i in range(count))
        try:
            return cls(algorithm=algorithm, key_id=key_id, tokens=tokens)
        except ValueError as e:
            raise IndexFormatError(str(e)) from None


def build_index(
    group: GroupOps,
    hashes,
    key: OprfKey,
    algorithm: HashAlgorithm | None = None,
) -> TokenIndex:
    """Tokenize a provider's hash list into a sorted index (offline).

    The algorithm tag is inferred from the hashes; it must be passed
    explicitly for an empty list.
    """
    hashes = list(hashes)
    if hashes:
        inferred = _common_algorithm(hashes)
        if algorithm is not None and algorithm is not inferred:
            raise MixedAlgorithmsError("algorithm argument disagrees with hashes")
        algorithm = inferred
    elif algorithm is None:
        raise ValueError("empty index needs an explicit algorithm")
    tokens = sorted({token_for(group, h, key).value for h in hashes})
    return TokenIndex(algorithm=algorithm, key_id=key.key_id, tokens=tuple(tokens))


def intersect(client_tokens, index: TokenIndex) -> list[Token]:
    """Client tokens present in the index, client order, dupes kept."""
    return [t for t in client_tokens if index.contains(t)]


def run_psi_local(group: GroupOps, x: ClientSet, y) -> list[PerceptualHash]:
    """In-process protocol driver; returns the provider's view, X ∩ Y.

    The provider draws a key, indexes Y offline, evaluates the client's
    blinded elements, and finally maps intersected tokens back to hashes
    (which it can, knowing Y and the key).  The client contributes
    exactly two exponentiations and one inversion per item of X.
    """
    y = list(y)
    key = OprfKey.generate(group)
    index = build_index(group, y, key, algorithm=x.algorithm)
    token_to_hash = {token_for(group, h, key).value: h for h in y}

    blinded = [blind(group, h, r) for h, r in zip(x.hashes, x.scalars)]
    evaluated = [evaluate(group, b, key) for b in blinded]
    tokens = [
        unblind_finalize(group, e, r, h)
        for e, r, h in zip(evaluated, x.scalars, x.hashes)
    ]
    return [token_to_hash[t.value] for t in intersect(tokens, index)]
