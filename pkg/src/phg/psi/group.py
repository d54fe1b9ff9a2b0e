"""Prime-order group abstraction used by the OPRF.

Two instantiations ship with the package: the real ristretto255 group
(see ristretto.py) and a deliberately tiny Schnorr subgroup of order
around 2^31 whose only purpose is cheap exhaustive testing.  A counting
wrapper makes per-party group work measurable.
"""

from __future__ import annotations

import hashlib
import secrets
from abc import ABC, abstractmethod


class ZeroScalarError(ValueError):
    """A blinding or key scalar reduced to zero."""


class InvalidElementError(ValueError):
    """An octet string is not the canonical encoding of a group element."""


class GroupOps(ABC):
    """Operations of a prime-order cyclic group.

    Scalars are integers modulo ``order``; elements are opaque values
    produced by this class only.  Encodings are canonical: every element
    has exactly one valid octet representation.
    """

    name: str
    order: int
    element_size: int

    @abstractmethod
    def hash_to_group(self, data: bytes):
        """Map arbitrary octets to an element, one-way."""

    @abstractmethod
    def identity(self):
        """The neutral element."""

    @abstractmethod
    def exp(self, element, scalar: int):
        """element ** scalar."""

    @abstractmethod
    def encode(self, element) -> bytes:
        """Canonical fixed-length encoding."""

    @abstractmethod
    def decode(self, data: bytes):
        """Inverse of encode; raises InvalidElementError otherwise."""

    def scalar_random(self) -> int:
        """A uniform nonzero scalar."""
        return 1 + secrets.randbelow(self.order - 1)

    def scalar_invert(self, scalar: int) -> int:
        """Multiplicative inverse modulo the group order."""
        s = scalar % self.order
        if s == 0:
            raise ZeroScalarError("scalar is zero modulo the group order")
        return pow(s, -1, self.order)

    def equal(self, a, b) -> bool:
        """Element equality (default: compare canonical encodings)."""
        return self.encode(a) == self.encode(b)


class TestGroup(GroupOps):
    """Insecure ~2^31-order Schnorr subgroup for fast unit tests.

    Elements are quadratic residues mod p where p = 2q + 1 is a safe
    prime; q fits in 32 bits, so discrete logs are trivial.  Never use
    outside tests.
    """

    # q and p = 2q + 1 are both prime
    ORDER_Q = 2147483693
    PRIME_P = 2 * ORDER_Q + 1

    name = "testgroup31"
    order = ORDER_Q
    element_size = 8

    def hash_to_group(self, data: bytes) -> int:
        h = int.from_bytes(hashlib.sha256(data).digest(), "big")
        return pow(h % self.PRIME_P, 2, self.PRIME_P)

    def identity(self) -> int:
        return 1

    def exp(self, element: int, scalar: int) -> int:
        return pow(element, scalar % self.order, self.PRIME_P)

    def encode(self, element: int) -> bytes:
        return int(element).to_bytes(self.element_size, "big")

    def decode(self, data: bytes) -> int:
        if len(data) != self.element_size:
            raise InvalidElementError(f"expected {self.element_size} octets")
        v = int.from_bytes(data, "big")
        if not 1 <= v < self.PRIME_P:
            raise InvalidElementError("element out of range")
        if pow(v, self.order, self.PRIME_P) != 1:
            raise InvalidElementError("not in the prime-order subgroup")
        return v

    def equal(self, a, b) -> bool:
        return int(a) == int(b)


class CountingGroup(GroupOps):
    """Wrapper that counts group operations on behalf of another group."""

    def __init__(self, inner: GroupOps):
        self.inner = inner
        self.name = f"counting({inner.name})"
        self.order = inner.order
        self.element_size = inner.element_size
        self.exp_count = 0
        self.invert_count = 0
        self.hash_to_group_count = 0

    def reset(self) -> None:
        self.exp_count = 0
        self.invert_count = 0
        self.hash_to_group_count = 0

    def hash_to_group(self, data: bytes):
        self.hash_to_group_count += 1
        return self.inner.hash_to_group(data)

    def identity(self):
        return self.inner.identity()

    def exp(self, element, scalar: int):
        self.exp_count += 1
        return self.inner.exp(element, scalar)

    def encode(self, element) -> bytes:
        return self.inner.encode(element)

    def decode(self, data: bytes):
        return self.inner.decode(data)

    def scalar_random(self) -> int:
        return self.inner.scalar_random()

    def scalar_invert(self, scalar: int) -> int:
        self.invert_count += 1
        return self.inner.scalar_invert(scalar)

    def equal(self, a, b) -> bool:
        return self.inner.equal(a, b)


def get_group(name: str) -> GroupOps:
    """Look up a group by name: 'ristretto255' or 'testgroup31'."""
    if name == "ristretto255":
        from .ristretto import Ristretto255Group

        return Ristretto255Group()
    if name == "testgroup31":
        return TestGroup()
    raise ValueError(f"unknown group {name!r}")


def default_group() -> GroupOps:
    return get_group("ristretto255")
