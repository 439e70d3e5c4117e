"""Canonical binary encoding primitives.

All multi-byte values are little-endian. Composite values are written as
a fixed sequence of tagged fields: one tag byte, then the value. Readers
check each expected tag and raise `CodecError` with the byte offset of
the mismatch, so corruption is reported where it happened rather than as
a downstream crash.

Canonical means: a value has exactly one encoding. Field order is fixed,
collections are sorted before writing, and there are no optional fields
at this layer. Equal values therefore encode to equal bytes, which the
persistence and speculation layers rely on for bit-exact comparison.
"""

from __future__ import annotations

import struct

from .errors import CodecError


class Writer:
    """Append-only little-endian byte builder."""

    def __init__(self) -> None:
        self._parts: list[bytes] = []

    def getvalue(self) -> bytes:
        return b"".join(self._parts)

    def raw(self, data: bytes) -> None:
        self._parts.append(data)

    def u8(self, v: int) -> None:
        self._parts.append(struct.pack("<B", v))

    def u16(self, v: int) -> None:
        self._parts.append(struct.pack("<H", v))

    def u32(self, v: int) -> None:
        self._parts.append(struct.pack("<I", v))

    def u64(self, v: int) -> None:
        self._parts.append(struct.pack("<Q", v))

    def i32(self, v: int) -> None:
        self._parts.append(struct.pack("<i", v))

    def f64(self, v: float) -> None:
        self._parts.append(struct.pack("<d", v))

    def boolean(self, v: bool) -> None:
        self.u8(1 if v else 0)

    def string(self, v: str) -> None:
        data = v.encode("utf-8")
        self.u32(len(data))
        self.raw(data)

    def blob(self, v: bytes) -> None:
        self.u32(len(v))
        self.raw(v)

    def tag(self, t: int) -> None:
        self.u8(t)


class Reader:
    """Cursor over an immutable byte buffer; all failures carry offsets."""

    def __init__(self, data: bytes) -> None:
        self._data = data
        self.offset = 0

    def remaining(self) -> int:
        return len(self._data) - self.offset

    def _take(self, n: int, what: str) -> bytes:
        if self.remaining() < n:
            raise CodecError(self.offset, f"truncated {what}: need {n} bytes, have {self.remaining()}")
        chunk = self._data[self.offset : self.offset + n]
        self.offset += n
        return chunk

    def u8(self) -> int:
        return struct.unpack("<B", self._take(1, "u8"))[0]

    def u16(self) -> int:
        return struct.unpack("<H", self._take(2, "u16"))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self._take(4, "u32"))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self._take(8, "u64"))[0]

    def i32(self) -> int:
        return struct.unpack("<i", self._take(4, "i32"))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self._take(8, "f64"))[0]

    def boolean(self) -> bool:
        v = self.u8()
        if v not in (0, 1):
            raise CodecError(self.offset - 1, f"invalid boolean byte {v}")
        return v == 1

    def string(self) -> str:
        n = self.u32()
        start = self.offset
        try:
            return self._take(n, "string").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CodecError(start, f"invalid utf-8: {exc}") from None

    def blob(self) -> bytes:
        n = self.u32()
        return self._take(n, "blob")

    def expect_tag(self, t: int, name: str) -> None:
        at = self.offset
        got = self.u8()
        if got != t:
            raise CodecError(at, f"expected field tag {t} ({name}), got {got}")

    def expect_end(self) -> None:
        if self.remaining():
            raise CodecError(self.offset, f"{self.remaining()} trailing bytes")
