import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from securenet.ring import (
    MASK64,
    P,
    Ring,
    RingError,
    RingTensor,
    SecretShare,
    bit_decompose,
    from_signed,
    random_elements,
    reconstruct,
    share,
    to_signed,
    wrap,
)
from securenet.prf import PrfKey

L = 1 << 64
RINGS = [Ring.ZL, Ring.ZLm1, Ring.Zp]


def test_moduli_and_wire_sizes():
    assert Ring.ZL.modulus == L
    assert Ring.ZLm1.modulus == L - 1
    assert Ring.Zp.modulus == P == 67
    assert [r.element_bytes for r in RINGS] == [8, 8, 1]
    assert {Ring.from_wire_tag(r.wire_tag) for r in RINGS} == set(RINGS)
    with pytest.raises(RingError):
        Ring.from_wire_tag(99)


def test_share_with_forced_mask_on_zero():
    s = share(RingTensor.of(Ring.ZL, [0, 0]), np.array([5, 7], np.uint64))
    assert s.part0.data.tolist() == [5, 7]
    assert s.part1.data.tolist() == [L - 5, L - 7]


def test_share_over_zlm1_by_hand():
    s = share(RingTensor.of(Ring.ZLm1, [2]), np.array([L - 2], np.uint64))
    assert int(s.part1.data[0]) == 3


@pytest.mark.parametrize("ring", RINGS)
def test_share_roundtrip_random(ring):
    gen = np.random.default_rng(1)
    x = RingTensor(ring, random_elements(ring, (10_000,), gen))
    assert reconstruct(share(x, gen)) == x
    assert reconstruct(share(x, PrfKey.derive(b"s", "roundtrip"))) == x


def test_reconstruct_examples():
    one = lambda ring, v: RingTensor.of(ring, [v])  # noqa: E731
    assert reconstruct(SecretShare(Ring.ZL, one(Ring.ZL, 1), one(Ring.ZL, 2))).data.tolist() == [3]
    assert reconstruct(SecretShare(Ring.ZL, one(Ring.ZL, L - 1), one(Ring.ZL, 1))).data.tolist() == [0]
    assert reconstruct(SecretShare(Ring.ZLm1, one(Ring.ZLm1, L - 2), one(Ring.ZLm1, 3))).data.tolist() == [2]


def test_reconstruct_rejects_mismatches():
    a = RingTensor.of(Ring.ZL, [1, 2])
    with pytest.raises(RingError):
        reconstruct(SecretShare(Ring.ZL, a, RingTensor.of(Ring.ZL, [1])))
    with pytest.raises(RingError):
        reconstruct(SecretShare(Ring.ZL, a, RingTensor.of(Ring.Zp, [1, 2])))


def test_canonical_forms():
    with pytest.raises(RingError):
        RingTensor(Ring.ZLm1, np.array([MASK64], np.uint64))
    with pytest.raises(RingError):
        RingTensor(Ring.Zp, np.array([67], np.uint8))
    assert Ring.ZLm1.asarray([MASK64]).tolist() == [0]
    assert Ring.Zp.asarray([-1]).tolist() == [66]
    assert Ring.ZL.asarray([-1]).tolist() == [MASK64]
    assert Ring.ZLm1.asarray([-1]).tolist() == [L - 2]
    assert Ring.ZL.asarray(np.array([L + 5], dtype=object)).tolist() == [5]


@pytest.mark.parametrize("ring", RINGS)
def test_arithmetic_matches_bignum_oracle(ring):
    gen = np.random.default_rng(7)
    a = random_elements(ring, (10_000,), gen)
    b = random_elements(ring, (10_000,), gen)
    m = ring.modulus
    ai, bi = [int(v) for v in a], [int(v) for v in b]
    assert [int(v) for v in ring.add(a, b)] == [(x + y) % m for x, y in zip(ai, bi)]
    assert [int(v) for v in ring.sub(a, b)] == [(x - y) % m for x, y in zip(ai, bi)]
    assert [int(v) for v in ring.mul(a, b)] == [(x * y) % m for x, y in zip(ai, bi)]
    assert [int(v) for v in ring.neg(a)] == [(-x) % m for x in ai]
    assert int(ring.sum(a)) == sum(ai) % m


@given(st.integers(0, L - 2), st.integers(0, L - 2))
def test_zlm1_edge_products(a, b):
    out = Ring.ZLm1.mul(np.array([a], np.uint64), np.array([b], np.uint64))
    assert int(out[0]) == a * b % (L - 1)


def test_matmul_only_over_zl():
    a = np.arange(6, dtype=np.uint64).reshape(2, 3)
    assert Ring.ZL.matmul(a, a.T).tolist() == (a.astype(object) @ a.T.astype(object)).tolist()
    with pytest.raises(RingError):
        Ring.Zp.matmul(a, a.T)


@pytest.mark.parametrize("ring", RINGS)
def test_encode_decode(ring):
    x = random_elements(ring, (3, 4), np.random.default_rng(3))
    data = ring.encode(x)
    assert len(data) == 12 * ring.element_bytes
    assert np.array_equal(ring.decode(data, (3, 4)), x)
    with pytest.raises(RingError):
        ring.decode(data, (5, 5))


def test_decode_rejects_noncanonical_and_ragged():
    with pytest.raises(RingError):
        Ring.Zp.decode(bytes([70]))
    with pytest.raises(RingError):
        Ring.ZLm1.decode(int(MASK64).to_bytes(8, "little"))
    with pytest.raises(RingError):
        Ring.ZL.decode(b"\x00" * 7)


def test_encoding_is_little_endian():
    assert Ring.ZL.encode(np.array([1], np.uint64)) == b"\x01" + b"\x00" * 7


def test_signed_views_and_helpers():
    assert to_signed(np.array([MASK64], np.uint64)).tolist() == [-1]
    assert from_signed(np.array([-2], np.int64)).tolist() == [L - 2]
    assert wrap(np.array([MASK64], np.uint64), np.array([1], np.uint64)).tolist() == [1]
    assert wrap(np.array([5], np.uint64), np.array([1], np.uint64)).tolist() == [0]
    bits = bit_decompose(np.array([5], np.uint64), 4)
    assert bits.tolist() == [[1, 0, 1, 0]]


def test_tensors_are_immutable():
    t = RingTensor.of(Ring.ZL, [1, 2])
    with pytest.raises(ValueError):
        t.data[0] = 3
