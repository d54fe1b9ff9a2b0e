"""ristretto255: a prime-order group over edwards25519 (RFC 9496).

Pure-Python implementation: extended Edwards coordinates, complete
addition formulas, 4-bit windowed scalar multiplication, canonical
32-octet encodings, and the one-way map from 64 uniform octets.  The
derived constants (sqrt(-1) and friends) are computed at import time
rather than pasted in, and the test suite cross-checks encodings and
scalar multiplication against libsodium when it is available.

Being Python, this code is not constant-time; it favors clarity and
canonical behavior over side-channel resistance.
"""

from __future__ import annotations

import hashlib

from .group import GroupOps, InvalidElementError

P = 2**255 - 19
L = 2**252 + 27742317777372353535851937790883648493  # group order
D = (-121665 * pow(121666, -1, P)) % P

# sqrt(-1): 2 is a non-residue mod p (p = 5 mod 8), so this squares to -1
SQRT_M1 = pow(2, (P - 1) // 4, P)
assert SQRT_M1 * SQRT_M1 % P == P - 1


def _is_negative(x: int) -> bool:
    return x & 1 == 1


def _abs(x: int) -> int:
    return P - x if _is_negative(x) else x


def _sqrt_ratio_m1(u: int, v: int) -> tuple[bool, int]:
    """(was_square, r) with r = sqrt(u/v) if it exists, else sqrt(i*u/v).

    Returns the nonnegative root; (False, 0) when v = 0 and u != 0.
    """
    v3 = v * v % P * v % P
    v7 = v3 * v3 % P * v % P
    r = u * v3 % P * pow(u * v7 % P, (P - 5) // 8, P) % P
    check = v * r % P * r % P
    u_neg = -u % P
    correct = check == u % P
    flipped = check == u_neg
    flipped_i = check == u_neg * SQRT_M1 % P
    if flipped or flipped_i:
        r = r * SQRT_M1 % P
    r = _abs(r)
    return correct or flipped, r


_ok, INVSQRT_A_MINUS_D = _sqrt_ratio_m1(1, (-1 - D) % P)
assert _ok
_ok, SQRT_AD_MINUS_ONE = _sqrt_ratio_m1((-D - 1) % P, 1)
assert _ok
# the standard fixes the odd root of a*d - 1, not the nonnegative one
if SQRT_AD_MINUS_ONE & 1 == 0:
    SQRT_AD_MINUS_ONE = P - SQRT_AD_MINUS_ONE
ONE_MINUS_D_SQ = (1 - D * D) % P
D_MINUS_ONE_SQ = (D - 1) * (D - 1) % P


class RistrettoPoint:
    """A group element in extended coordinates (x, y, z, t), t = xy/z."""

    __slots__ = ("x", "y", "z", "t")

    def __init__(self, x: int, y: int, z: int, t: int):
        self.x = x
        self.y = y
        self.z = z
        self.t = t

    def __eq__(self, other) -> bool:
        if not isinstance(other, RistrettoPoint):
            return NotImplemented
        # ristretto equality is invariant under the curve's torsion
        return (
            self.x * other.y % P == self.y * other.x % P
            or self.y * other.y % P == self.x * other.x % P
        )

    def __hash__(self):
        raise TypeError("RistrettoPoint is unhashable; hash its encoding")

    def __repr__(self) -> str:
        return f"RistrettoPoint({_encode(self).hex()})"


IDENTITY = RistrettoPoint(0, 1, 1, 0)


def _add(p: RistrettoPoint, q: RistrettoPoint) -> RistrettoPoint:
    a = (p.y - p.x) * (q.y - q.x) % P
    b = (p.y + p.x) * (q.y + q.x) % P
    c = p.t * 2 % P * D % P * q.t % P
    d = p.z * 2 % P * q.z % P
    e = b - a
    f = d - c
    g = d + c
    h = b + a
    return RistrettoPoint(e * f % P, g * h % P, f * g % P, e * h % P)


def _dbl(p: RistrettoPoint) -> RistrettoPoint:
    a = p.x * p.x % P
    b = p.y * p.y % P
    c = 2 * p.z % P * p.z % P
    h = a + b
    e = h - (p.x + p.y) ** 2 % P
    g = a - b
    f = c + g
    return RistrettoPoint(e * f % P, g * h % P, f * g % P, e * h % P)


def _mul(p: RistrettoPoint, k: int) -> RistrettoPoint:
    k %= L
    if k == 0:
        return IDENTITY
    table = [IDENTITY, p]
    for _ in range(14):
        table.append(_add(table[-1], p))
    acc = IDENTITY
    started = False
    for shift in range(4 * ((k.bit_length() + 3) // 4) - 4, -1, -4):
        if started:
            acc = _dbl(_dbl(_dbl(_dbl(acc))))
        nibble = (k >> shift) & 15
        if nibble:
            acc = _add(acc, table[nibble]) if started else table[nibble]
            started = True
    return acc


def _encode(p: RistrettoPoint) -> bytes:
    u1 = (p.z + p.y) * (p.z - p.y) % P
    u2 = p.x * p.y % P
    _, invsqrt = _sqrt_ratio_m1(1, u1 * u2 % P * u2 % P)
    den1 = invsqrt * u1 % P
    den2 = invsqrt * u2 % P
    z_inv = den1 * den2 % P * p.t % P
    if _is_negative(p.t * z_inv % P):
        x = p.y * SQRT_M1 % P
        y = p.x * SQRT_M1 % P
        den_inv = den1 * INVSQRT_A_MINUS_D % P
    else:
        x = p.x
        y = p.y
        den_inv = den2
    if _is_negative(x * z_inv % P):
        y = -y % P
    s = _abs(den_inv * ((p.z - y) % P) % P)
    return s.to_bytes(32, "little")


def _decode(data: bytes) -> RistrettoPoint:
    if len(data) != 32:
        raise InvalidElementError("ristretto255 encodings are 32 octets")
    s = int.from_bytes(data, "little")
    if s >= P:
        raise InvalidElementError("non-canonical field element")
    if _is_negative(s):
        raise InvalidElementError("negative field element")
    ss = s * s % P
    u1 = (1 - ss) % P
    u2 = (1 + ss) % P
    u2_sqr = u2 * u2 % P
    v = (-(D * u1 % P * u1 % P) - u2_sqr) % P
    was_square, invsqrt = _sqrt_ratio_m1(1, v * u2_sqr % P)
    den_x = invsqrt * u2 % P
    den_y = invsqrt * den_x % P * v % P
    x = _abs(2 * s % P * den_x % P)
    y = u1 * den_y % P
    t = x * y % P
    if not was_square or _is_negative(t) or y == 0:
        raise InvalidElementError("not a valid ristretto255 element")
    return RistrettoPoint(x, y, 1, t)


def _map(r0: int) -> RistrettoPoint:
    """The Elligator-style map from one field element to the group."""
    r = SQRT_M1 * r0 % P * r0 % P
    u = (r + 1) * ONE_MINUS_D_SQ % P
    v = (-1 - r * D) % P * ((r + D) % P) % P
    was_square, s = _sqrt_ratio_m1(u, v)
    if was_square:
        c = P - 1
    else:
        s = _abs(s * r0 % P)
        s = -s % P
        c = r
    n = (c * ((r - 1) % P) % P * D_MINUS_ONE_SQ - v) % P
    w0 = 2 * s % P * v % P
    w1 = n * SQRT_AD_MINUS_ONE % P
    w2 = (1 - s * s) % P
    w3 = (1 + s * s) % P
    return RistrettoPoint(w0 * w3 % P, w2 * w1 % P, w1 * w3 % P, w0 * w2 % P)


def _from_uniform(data: bytes) -> RistrettoPoint:
    """Map 64 uniform octets to the group (two maps, summed)."""
    if len(data) != 64:
        raise ValueError("need 64 octets")
    mask = (1 << 255) - 1
    r1 = int.from_bytes(data[:32], "little") & mask
    r2 = int.from_bytes(data[32:], "little") & mask
    return _add(_map(r1 % P), _map(r2 % P))


def basepoint() -> RistrettoPoint:
    """The standard generator (the edwards25519 basepoint)."""
    y = 4 * pow(5, -1, P) % P
    x2 = (y * y - 1) * pow(D * y * y % P + 1, -1, P) % P
    ok, x = _sqrt_ratio_m1(x2, 1)
    assert ok
    if _is_negative(x):
        x = P - x
    return RistrettoPoint(x, y, 1, x * y % P)


class Ristretto255Group(GroupOps):
    """GroupOps over ristretto255."""

    name = "ristretto255"
    order = L
    element_size = 32

    def hash_to_group(self, data: bytes) -> RistrettoPoint:
        return _from_uniform(hashlib.sha512(data).digest())

    def identity(self) -> RistrettoPoint:
        return IDENTITY

    def exp(self, element: RistrettoPoint, scalar: int) -> RistrettoPoint:
        return _mul(element, scalar)

    def encode(self, element: RistrettoPoint) -> bytes:
        return _encode(element)

    def decode(self, data: bytes) -> RistrettoPoint:
        return _decode(data)

    def equal(self, a: RistrettoPoint, b: RistrettoPoint) -> bool:
        return a == b
