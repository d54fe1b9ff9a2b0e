"""OPRF token construction and the private-set-intersection core."""

import secrets

import numpy as np
import pytest

from phg.phash import HashAlgorithm, PerceptualHash
from phg.psi.core import (
    ClientSet,
    IndexFormatError,
    MixedAlgorithmsError,
    OprfKey,
    Token,
    TokenIndex,
    blind,
    build_index,
    evaluate,
    intersect,
    load_key,
    run_psi_local,
    save_key,
    token_for,
    unblind_finalize,
)
from phg.psi.group import TestGroup, ZeroScalarError

G = TestGroup()


def ah(i: int) -> PerceptualHash:
    return PerceptualHash(HashAlgorithm.AHASH64, int(i).to_bytes(8, "big"))


def pq(i: int) -> PerceptualHash:
    return PerceptualHash(HashAlgorithm.PDQ256, int(i).to_bytes(32, "big"))


# ---------------------------------------------------------------------------
# OPRF algebra


def test_blinded_evaluation_equals_direct_token():
    key = OprfKey.generate(G)
    for i in range(50):
        h = ah(i * 911)
        r = G.scalar_random()
        token = unblind_finalize(G, evaluate(G, blind(G, h, r), key), r, h)
        assert token == token_for(G, h, key)


def test_blinding_hides_the_element():
    # two blindings of the same hash look unrelated on the wire
    h = ah(7)
    b1 = G.encode(blind(G, h, G.scalar_random()))
    b2 = G.encode(blind(G, h, G.scalar_random()))
    assert b1 != b2  # 1/q collision chance, q ~ 2^31


def test_tokens_differ_across_keys():
    h = ah(99)
    t1 = token_for(G, h, OprfKey.generate(G))
    t2 = token_for(G, h, OprfKey.generate(G))
    assert t1 != t2


def test_zero_blinding_rejected():
    with pytest.raises(ZeroScalarError):
        blind(G, ah(1), 0)
    with pytest.raises(ZeroScalarError):
        blind(G, ah(1), G.order)


def test_token_is_32_octets_and_validates():
    t = token_for(G, ah(5), OprfKey.generate(G))
    assert len(t.value) == 32
    with pytest.raises(ValueError):
        Token(b"short")


def test_oprf_key_validation():
    with pytest.raises(ZeroScalarError):
        OprfKey(scalar=0, key_id=bytes(8))
    with pytest.raises(ValueError):
        OprfKey(scalar=5, key_id=bytes(7))


def test_key_file_roundtrip(tmp_path):
    key = OprfKey.generate(G)
    p = tmp_path / "k.json"
    save_key(p, key, G)
    loaded, group_name = load_key(p)
    assert loaded == key
    assert group_name == G.name


# ---------------------------------------------------------------------------
# client set


def test_client_set_validation():
    with pytest.raises(ValueError):
        ClientSet(hashes=(), scalars=())
    with pytest.raises(MixedAlgorithmsError):
        ClientSet.create(G, [ah(1), pq(2)])
    with pytest.raises(ValueError):
        ClientSet(hashes=(ah(1),), scalars=(1, 2))


def test_client_set_fresh_scalars():
    x = ClientSet.create(G, [ah(1), ah(2), ah(3)])
    assert len(set(x.scalars)) == 3  # overwhelmingly likely distinct
    assert x.algorithm is HashAlgorithm.AHASH64


# ---------------------------------------------------------------------------
# token index / PHIX


def test_index_sorted_dedup():
    key = OprfKey.generate(G)
    idx = build_index(G, [ah(3), ah(1), ah(3), ah(2)], key)
    assert len(idx) == 3
    assert list(idx.tokens) == sorted(idx.tokens)


def test_index_membership():
    key = OprfKey.generate(G)
    idx = build_index(G, [ah(i) for i in range(10)], key)
    assert idx.contains(token_for(G, ah(4), key))
    assert not idx.contains(token_for(G, ah(40), key))
    # a single flipped byte misses
    t = bytearray(token_for(G, ah(4), key).value)
    t[13] ^= 0x40
    assert not idx.contains(Token(bytes(t)))


def test_empty_index_needs_algorithm():
    key = OprfKey.generate(G)
    with pytest.raises(ValueError):
        build_index(G, [], key)
    idx = build_index(G, [], key, algorithm=HashAlgorithm.PDQ256)
    assert len(idx) == 0


def test_index_rejects_unsorted_tokens():
    with pytest.raises(ValueError):
        TokenIndex(
            algorithm=HashAlgorithm.AHASH64,
            key_id=bytes(8),
            tokens=(b"\x02" * 32, b"\x01" * 32),
        )
    with pytest.raises(ValueError):
        TokenIndex(
            algorithm=HashAlgorithm.AHASH64,
            key_id=bytes(8),
            tokens=(b"\x01" * 32, b"\x01" * 32),
        )


def test_phix_roundtrip():
    key = OprfKey.generate(G)
    for n in (0, 1, 7):
        idx = build_index(G, [pq(i) for i in range(n)], key, algorithm=HashAlgorithm.PDQ256)
        data = idx.to_bytes()
        assert data[:4] == b"PHIX"
        again = TokenIndex.from_bytes(data)
        assert again == idx
        assert len(data) == 23 + 32 * n


def test_phix_malformations():
    key = OprfKey.generate(G)
    good = build_index(G, [ah(1), ah(2)], key).to_bytes()
    cases = [
        b"",  # empty
        good[:10],  # truncated header
        b"XHIP" + good[4:],  # magic
        good[:4] + b"\x02" + good[5:],  # version
        good[:5] + b"\x09" + good[6:],  # algorithm code
        good[:6] + b"\x10" + good[7:],  # token length
        good[:-1],  # truncated body
        good + b"\x00",  # trailing garbage
    ]
    for data in cases:
        with pytest.raises(IndexFormatError):
            TokenIndex.from_bytes(data)


# ---------------------------------------------------------------------------
# protocol driver vs brute force


def test_psi_matches_brute_force_random_instances():
    rng = np.random.default_rng(101)
    for trial in range(10):
        y_ids = rng.choice(5000, size=int(rng.integers(1, 400)), replace=False)
        x_size = int(rng.integers(1, 12))
        planted = int(rng.integers(0, x_size + 1))
        x_ids = list(rng.choice(y_ids, size=min(planted, len(y_ids)), replace=False))
        x_ids += list(10_000 + rng.choice(5000, size=x_size - len(x_ids), replace=False))
        x = ClientSet.create(G, [ah(int(i)) for i in x_ids])
        y = [ah(int(i)) for i in y_ids]
        got = sorted(h.to_text() for h in run_psi_local(G, x, y))
        want = sorted(ah(int(i)).to_text() for i in set(x_ids) & set(int(v) for v in y_ids))
        assert got == want, f"trial {trial}"


def test_psi_duplicate_client_items_surface_per_occurrence():
    x = ClientSet.create(G, [ah(5), ah(5), ah(6)])
    out = run_psi_local(G, x, [ah(5), ah(9)])
    assert [h.to_text() for h in out] == [ah(5).to_text(), ah(5).to_text()]


def test_psi_disjoint_and_total_overlap():
    x = ClientSet.create(G, [ah(1), ah(2)])
    assert run_psi_local(G, x, [ah(8), ah(9)]) == []
    out = run_psi_local(G, x, [ah(1), ah(2), ah(3)])
    assert sorted(h.to_text() for h in out) == [ah(1).to_text(), ah(2).to_text()]


def test_intersect_preserves_client_order():
    key = OprfKey.generate(G)
    idx = build_index(G, [ah(i) for i in range(5)], key)
    toks = [token_for(G, ah(i), key) for i in (4, 0, 99, 2)]
    hits = intersect(toks, idx)
    assert hits == [toks[0], toks[1], toks[3]]
