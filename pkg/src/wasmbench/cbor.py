"""Minimal deterministic CBOR codec for the invocation wire format.

Covers the subset every backend speaks: unsigned/negative integers, byte
strings, UTF-8 text strings, arrays, maps with text keys, booleans, null,
and 64-bit floats. Encoding is deterministic: definite lengths only,
shortest-form integer heads, and map keys sorted by their encoded bytes,
so any two encoders in the project produce identical output for equal
values. Indefinite-length items and tags are rejected on decode; nothing
in this project emits them.
"""

from __future__ import annotations

import struct
from typing import Any

_MAJOR_UINT = 0
_MAJOR_NEGINT = 1
_MAJOR_BYTES = 2
_MAJOR_TEXT = 3
_MAJOR_ARRAY = 4
_MAJOR_MAP = 5
_MAJOR_SIMPLE = 7


class CBORError(ValueError):
    """Base error for codec failures."""


class CBOREncodeError(CBORError):
    """Raised for values outside the supported subset."""


class CBORDecodeError(CBORError):
    """Raised for malformed or unsupported input bytes."""


def _encode_head(major: int, value: int) -> bytes:
    if value < 24:
        return bytes([(major << 5) | value])
    if value < 0x100:
        return bytes([(major << 5) | 24, value])
    if value < 0x10000:
        return bytes([(major << 5) | 25]) + value.to_bytes(2, "big")
    if value < 0x100000000:
        return bytes([(major << 5) | 26]) + value.to_bytes(4, "big")
    if value < 0x10000000000000000:
        return bytes([(major << 5) | 27]) + value.to_bytes(8, "big")
    raise CBOREncodeError(f"integer argument too large: {value}")


def _encode_item(obj: Any, out: list[bytes]) -> None:
    if obj is True:
        out.append(b"\xf5")
    elif obj is False:
        out.append(b"\xf4")
    elif obj is None:
        out.append(b"\xf6")
    elif isinstance(obj, int):
        if obj >= 0:
            out.append(_encode_head(_MAJOR_UINT, obj))
        else:
            out.append(_encode_head(_MAJOR_NEGINT, -1 - obj))
    elif isinstance(obj, float):
        # Always 8-byte IEEE double: one representation per value.
        out.append(b"\xfb" + struct.pack(">d", obj))
    elif isinstance(obj, (bytes, bytearray, memoryview)):
        data = bytes(obj)
        out.append(_encode_head(_MAJOR_BYTES, len(data)))
        out.append(data)
    elif isinstance(obj, str):
        data = obj.encode("utf-8")
        out.append(_encode_head(_MAJOR_TEXT, len(data)))
        out.append(data)
    elif isinstance(obj, (list, tuple)):
        out.append(_encode_head(_MAJOR_ARRAY, len(obj)))
        for item in obj:
            _encode_item(item, out)
    elif isinstance(obj, dict):
        entries = []
        for key, value in obj.items():
            if not isinstance(key, str):
                raise CBOREncodeError(f"map keys must be text, got {type(key).__name__}")
            chunks: list[bytes] = []
            _encode_item(key, chunks)
            entries.append((b"".join(chunks), value))
        entries.sort(key=lambda kv: kv[0])
        out.append(_encode_head(_MAJOR_MAP, len(entries)))
        for key_bytes, value in entries:
            out.append(key_bytes)
            _encode_item(value, out)
    else:
        raise CBOREncodeError(f"unsupported type: {type(obj).__name__}")


def encode(obj: Any) -> bytes:
    """Encode ``obj`` to deterministic CBOR bytes."""
    out: list[bytes] = []
    _encode_item(obj, out)
    return b"".join(out)


class _Decoder:
    __slots__ = ("data", "pos")

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def _take(self, n: int) -> bytes:
        end = self.pos + n
        if end > len(self.data):
            raise CBORDecodeError("truncated input")
        chunk = self.data[self.pos:end]
        self.pos = end
        return chunk

    def _head(self) -> tuple[int, int]:
        byte = self._take(1)[0]
        major, info = byte >> 5, byte & 0x1F
        if info < 24:
            return major, info
        if info == 24:
            return major, self._take(1)[0]
        if info == 25:
            return major, int.from_bytes(self._take(2), "big")
        if info == 26:
            return major, int.from_bytes(self._take(4), "big")
        if info == 27:
            return major, int.from_bytes(self._take(8), "big")
        raise CBORDecodeError(f"indefinite/reserved additional info {info} not supported")

    def decode_item(self) -> Any:
        start = self.pos
        byte = self.data[start] if start < len(self.data) else None
        if byte is None:
            raise CBORDecodeError("truncated input")
        # Floats and simple values carry their width in the info bits.
        if byte >> 5 == _MAJOR_SIMPLE:
            self.pos += 1
            info = byte & 0x1F
            if info == 20:
                return False
            if info == 21:
                return True
            if info == 22:
                return None
            if info == 25:
                return float(struct.unpack(">e", self._take(2))[0])
            if info == 26:
                return float(struct.unpack(">f", self._take(4))[0])
            if info == 27:
                return float(struct.unpack(">d", self._take(8))[0])
            raise CBORDecodeError(f"unsupported simple value {info}")
        major, arg = self._head()
        if major == _MAJOR_UINT:
            return arg
        if major == _MAJOR_NEGINT:
            return -1 - arg
        if major == _MAJOR_BYTES:
            return bytes(self._take(arg))
        if major == _MAJOR_TEXT:
            try:
                return self._take(arg).decode("utf-8")
            except UnicodeDecodeError as exc:
                raise CBORDecodeError("invalid UTF-8 in text string") from exc
        if major == _MAJOR_ARRAY:
            return [self.decode_item() for _ in range(arg)]
        if major == _MAJOR_MAP:
            result = {}
            for _ in range(arg):
                key = self.decode_item()
                if not isinstance(key, str):
                    raise CBORDecodeError("map keys must be text")
                result[key] = self.decode_item()
            return result
        raise CBORDecodeError(f"unsupported major type {major}")


def decode(data: bytes) -> Any:
    """Decode one CBOR item; trailing bytes are an error."""
    dec = _Decoder(bytes(data))
    obj = dec.decode_item()
    if dec.pos != len(dec.data):
        raise CBORDecodeError(f"{len(dec.data) - dec.pos} trailing bytes after item")
    return obj
