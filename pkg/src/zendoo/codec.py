"""Canonical, length-prefixed binary encoding.

Every digest in the package is taken over this encoding, so it has to be
injective and stable: integers are big-endian two's complement with a length
prefix, sequences carry their element count, dictionaries are sorted by the
encoding of their keys, and dataclasses are written as their registered name
followed by their init fields in declaration order.
"""

from __future__ import annotations

import dataclasses
import enum
import struct
from typing import Any, TypeVar

from .errors import CodecError

T = TypeVar("T")

_CLASSES: dict[str, type] = {}
_MAX_DEPTH = 400
_U32 = struct.Struct(">I")
_CACHE_ATTR = "_codec_bytes"
_LAYOUTS: dict[type, tuple[bytes, tuple[str, ...]]] = {}


def serializable(cls: type[T]) -> type[T]:
    """Register a dataclass or Enum for encoding/decoding by name."""
    name = cls.__name__
    if name in _CLASSES and _CLASSES[name] is not cls:
        raise TypeError(f"duplicate serializable name {name!r}")
    if not (dataclasses.is_dataclass(cls) or issubclass(cls, enum.Enum)):
        raise TypeError(f"{name} is neither a dataclass nor an Enum")
    _CLASSES[name] = cls
    return cls


def _layout(cls: type) -> tuple[bytes, tuple[str, ...]]:
    """Header bytes and init field names of a registered dataclass."""
    layout = _LAYOUTS.get(cls)
    if layout is None:
        name = cls.__name__
        if _CLASSES.get(name) is not cls:
            raise TypeError(f"{name} is not registered as serializable")
        raw = name.encode()
        names = tuple(f.name for f in dataclasses.fields(cls) if f.init)
        layout = _LAYOUTS[cls] = (b"O" + _len(len(raw)) + raw + _len(len(names)), names)
    return layout


def _len(n: int) -> bytes:
    return _U32.pack(n)


def _int_bytes(n: int) -> bytes:
    size = (n.bit_length() + 8) // 8
    return n.to_bytes(size, "big", signed=True)


def _encode(obj: Any, out: list[bytes]) -> None:
    t = type(obj)
    # exact-type fast paths for the common cases; bool and Enum fall through
    if t is bytes:
        out.append(b"B" + _U32.pack(len(obj)) + obj)
    elif t is int:
        raw = _int_bytes(obj)
        out.append(b"I" + _U32.pack(len(raw)) + raw)
    elif t is tuple:
        out.append(b"L" + _U32.pack(len(obj)))
        for item in obj:
            if type(item) is bytes:
                out.append(b"B" + _U32.pack(len(item)) + item)
            else:
                _encode(item, out)
    elif t in _LAYOUTS:
        _encode_dataclass(obj, t, _LAYOUTS[t], out)
    elif obj is None:
        out.append(b"N")
    elif obj is True:
        out.append(b"T")
    elif obj is False:
        out.append(b"F")
    elif isinstance(obj, enum.Enum):
        name = type(obj).__name__.encode()
        out.append(b"E" + _len(len(name)) + name)
        _encode(obj.value, out)
    elif isinstance(obj, int):
        raw = _int_bytes(obj)
        out.append(b"I" + _len(len(raw)) + raw)
    elif isinstance(obj, (bytes, bytearray)):
        out.append(b"B" + _len(len(obj)) + bytes(obj))
    elif isinstance(obj, str):
        raw = obj.encode("utf-8")
        out.append(b"S" + _len(len(raw)) + raw)
    elif isinstance(obj, (tuple, list)):
        out.append(b"L" + _len(len(obj)))
        for item in obj:
            _encode(item, out)
    elif isinstance(obj, dict):
        items = sorted((encode(k), v) for k, v in obj.items())
        out.append(b"D" + _len(len(items)))
        for key, value in items:
            out.append(key)
            _encode(value, out)
    elif dataclasses.is_dataclass(obj):
        _encode_dataclass(obj, t, _layout(t), out)
    else:
        raise TypeError(f"cannot encode {type(obj).__name__}")


def _encode_dataclass(obj: Any, cls: type, layout: tuple[bytes, tuple[str, ...]], out: list[bytes]) -> None:
    cached = obj.__dict__.get(_CACHE_ATTR)
    if cached is not None:
        out.append(cached)
        return
    header, names = layout
    parts = [header]
    for name in names:
        value = getattr(obj, name)
        if type(value) is bytes:
            parts.append(b"B" + _U32.pack(len(value)) + value)
        else:
            _encode(value, parts)
    blob = b"".join(parts)
    if cls.__dataclass_params__.frozen:
        # frozen values never change, so their encoding can be reused
        object.__setattr__(obj, _CACHE_ATTR, blob)
    out.append(blob)


def encode(obj: Any) -> bytes:
    out: list[bytes] = []
    _encode(obj, out)
    return b"".join(out)


class _Reader:
    __slots__ = ("data", "pos")

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        end = self.pos + n
        if n < 0 or end > len(self.data):
            raise CodecError("truncated input")
        chunk = self.data[self.pos:end]
        self.pos = end
        return chunk

    def length(self) -> int:
        return _U32.unpack(self.take(4))[0]


def _decode(r: _Reader, depth: int) -> Any:
    if depth > _MAX_DEPTH:
        raise CodecError("nesting too deep")
    tag = r.take(1)
    if tag == b"N":
        return None
    if tag == b"T":
        return True
    if tag == b"F":
        return False
    if tag == b"I":
        raw = r.take(r.length())
        if not raw or _int_bytes(int.from_bytes(raw, "big", signed=True)) != raw:
            raise CodecError("non-canonical integer")
        return int.from_bytes(raw, "big", signed=True)
    if tag == b"B":
        return r.take(r.length())
    if tag == b"S":
        try:
            return r.take(r.length()).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CodecError("bad utf-8") from exc
    if tag == b"L":
        n = r.length()
        if n > len(r.data):
            raise CodecError("bad sequence length")
        return tuple(_decode(r, depth + 1) for _ in range(n))
    if tag == b"D":
        n = r.length()
        if n > len(r.data):
            raise CodecError("bad mapping length")
        result = {}
        previous = None
        for _ in range(n):
            start = r.pos
            key = _decode(r, depth + 1)
            raw_key = r.data[start:r.pos]
            if previous is not None and raw_key <= previous:
                raise CodecError("mapping keys not in canonical order")
            previous = raw_key
            try:
                result[key] = _decode(r, depth + 1)
            except TypeError as exc:
                raise CodecError("unhashable key") from exc
        return result
    if tag in (b"E", b"O"):
        try:
            name = r.take(r.length()).decode("ascii")
        except UnicodeDecodeError as exc:
            raise CodecError("bad class name") from exc
        cls = _CLASSES.get(name)
        if cls is None:
            raise CodecError(f"unknown class {name!r}")
        if tag == b"E":
            if not issubclass(cls, enum.Enum):
                raise CodecError(f"{name} is not an enum")
            try:
                return cls(_decode(r, depth + 1))
            except ValueError as exc:
                raise CodecError(str(exc)) from exc
        if not dataclasses.is_dataclass(cls):
            raise CodecError(f"{name} is not a dataclass")
        init_fields = [f for f in dataclasses.fields(cls) if f.init]
        if r.length() != len(init_fields):
            raise CodecError(f"field count mismatch for {name}")
        kwargs = {f.name: _decode(r, depth + 1) for f in init_fields}
        try:
            return cls(**kwargs)
        except CodecError:
            raise
        except Exception as exc:  # constructor validation
            raise CodecError(f"invalid {name}: {exc}") from exc
    raise CodecError(f"unknown tag {tag!r}")


def decode(data: bytes) -> Any:
    r = _Reader(bytes(data))
    obj = _decode(r, 0)
    if r.pos != len(r.data):
        raise CodecError("trailing bytes")
    return obj


def decode_as(data: bytes, cls: type[T]) -> T:
    obj = decode(data)
    if not isinstance(obj, cls):
        raise CodecError(f"expected {cls.__name__}, got {type(obj).__name__}")
    return obj
