import pytest
from hypothesis import given, strategies as st

from wasmbench import cbor

# known encodings (deterministic form: definite lengths, shortest heads)
_KNOWN = [
    (0, bytes([0x00])),
    (23, bytes([0x17])),
    (24, bytes([0x18, 0x18])),
    (255, bytes([0x18, 0xFF])),
    (256, bytes([0x19, 0x01, 0x00])),
    (1000000, bytes([0x1A, 0x00, 0x0F, 0x42, 0x40])),
    (2**40, bytes([0x1B, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0x00, 0x00])),
    (-1, bytes([0x20])),
    (-100, bytes([0x38, 0x63])),
    (True, b"\xf5"),
    (False, b"\xf4"),
    (None, b"\xf6"),
    (b"", b"\x40"),
    (b"\x01\x02", b"\x42\x01\x02"),
    ("", b"\x60"),
    ("ietf", b"\x64ietf"),
    ([], b"\x80"),
    ([1, 2], b"\x82\x01\x02"),
    ({}, b"\xa0"),
    ({"a": 1}, b"\xa1\x61a\x01"),
    (1.5, b"\xfb\x3f\xf8\x00\x00\x00\x00\x00\x00"),
]


@pytest.mark.parametrize("value, encoded", _KNOWN)
def test_known_encodings(value, encoded):
    assert cbor.encode(value) == encoded
    assert cbor.decode(encoded) == value


def test_map_keys_sorted_canonically():
    # length-first ordering of the encoded key bytes
    data = cbor.encode({"payload": 1, "v": 2, "crc": 3, "kind": 4})
    assert data == cbor.encode({"v": 2, "crc": 3, "kind": 4, "payload": 1})
    order = [b"\x61v", b"\x63crc", b"\x64kind", b"\x67payload"]
    positions = [data.index(k) for k in order]
    assert positions == sorted(positions)


def test_trailing_bytes_rejected():
    with pytest.raises(cbor.CBORDecodeError, match="trailing"):
        cbor.decode(b"\x01\x01")


def test_truncated_rejected():
    with pytest.raises(cbor.CBORDecodeError):
        cbor.decode(b"\x42\x01")
    with pytest.raises(cbor.CBORDecodeError):
        cbor.decode(b"")


def test_indefinite_rejected():
    with pytest.raises(cbor.CBORDecodeError):
        cbor.decode(b"\x5f\x41\x01\xff")  # indefinite byte string


def test_non_text_map_key_rejected():
    with pytest.raises(cbor.CBORDecodeError):
        cbor.decode(b"\xa1\x01\x01")  # int key
    with pytest.raises(cbor.CBOREncodeError):
        cbor.encode({1: "x"})


def test_unsupported_types_rejected():
    with pytest.raises(cbor.CBOREncodeError):
        cbor.encode(object())


def test_half_and_single_floats_decode():
    assert cbor.decode(b"\xf9\x3c\x00") == 1.0
    assert cbor.decode(b"\xfa\x3f\x80\x00\x00") == 1.0


_scalars = st.one_of(
    st.integers(min_value=-(2**64), max_value=2**64 - 1),
    st.booleans(),
    st.none(),
    st.binary(max_size=64),
    st.text(max_size=32),
    st.floats(allow_nan=False),
)
_values = st.recursive(
    _scalars,
    lambda inner: st.one_of(
        st.lists(inner, max_size=6), st.dictionaries(st.text(max_size=8), inner, max_size=6)
    ),
    max_leaves=24,
)


@given(_values)
def test_roundtrip_property(value):
    assert cbor.decode(cbor.encode(value)) == value


@given(_values)
def test_encoding_is_canonical_fixed_point(value):
    encoded = cbor.encode(value)
    assert cbor.encode(cbor.decode(encoded)) == encoded
