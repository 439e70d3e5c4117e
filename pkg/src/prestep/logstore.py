"""Append-only record log: one file per experiment.

Framing per record: [u32 length][u32 crc32 of payload][payload], all
little-endian. Reads stop at the first frame whose length or checksum
does not hold, so a torn tail from a crash degrades to "the log ends
here" instead of poisoning the stream; the cut offset is surfaced to the
operator.

Writes go through `RecordStore`, a small interface the save queue
retries against. `FlakyStore` wraps any store with seeded failure
injection for fault testing.
"""

from __future__ import annotations

import os
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import PrestepError

_HEADER = struct.Struct("<II")


class StoreWriteError(PrestepError):
    """A write did not make it to the log; safe to retry."""


class RecordStore:
    def append(self, payload: bytes) -> None:
        raise NotImplementedError

    def flush(self) -> None:
        pass


@dataclass(frozen=True, slots=True)
class ScanResult:
    payloads: list[bytes]
    corrupt_at: int | None  # byte offset of the first bad frame, if any
    message: str | None


class LogStore(RecordStore):
    """File-backed append log. A single writer owns the file; readers
    may scan concurrently (appends are atomic at the framing level)."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "ab")

    def append(self, payload: bytes) -> None:
        frame = _HEADER.pack(len(payload), zlib.crc32(payload)) + payload
        try:
            self._fh.write(frame)
            self._fh.flush()
        except OSError as exc:
            raise StoreWriteError(f"append to {self.path} failed: {exc}") from exc

    def flush(self) -> None:
        try:
            self._fh.flush()
            os.fsync(self._fh.fileno())
        except OSError as exc:
            raise StoreWriteError(f"flush of {self.path} failed: {exc}") from exc

    def close(self) -> None:
        self._fh.close()

    def scan(self) -> ScanResult:
        return scan_log(self.path)


def scan_log(path: str | Path) -> ScanResult:
    """Read every intact frame; stop (not fail) at the first corruption
    so the consistent prefix stays usable."""
    path = Path(path)
    payloads: list[bytes] = []
    if not path.exists():
        return ScanResult(payloads, None, None)
    data = path.read_bytes()
    offset = 0
    while offset < len(data):
        if offset + _HEADER.size > len(data):
            return ScanResult(payloads, offset, "truncated frame header")
        length, crc = _HEADER.unpack_from(data, offset)
        start = offset + _HEADER.size
        end = start + length
        if end > len(data):
            return ScanResult(payloads, offset, f"truncated frame body ({length} bytes)")
        payload = data[start:end]
        if zlib.crc32(payload) != crc:
            return ScanResult(payloads, offset, "crc mismatch")
        payloads.append(payload)
        offset = end
    return ScanResult(payloads, None, None)


class MemoryStore(RecordStore):
    """In-memory store for tests and the protocol fault harnesses."""

    def __init__(self) -> None:
        self.payloads: list[bytes] = []

    def append(self, payload: bytes) -> None:
        self.payloads.append(payload)


class FlakyStore(RecordStore):
    """Wraps a store, failing each append with probability `fail_prob`
    (seeded, reproducible). Failures happen before the write reaches the
    inner store, mirroring an I/O error surfaced by the backend."""

    def __init__(self, inner: RecordStore, fail_prob: float, seed: int):
        self.inner = inner
        self.fail_prob = fail_prob
        self._gen = np.random.Generator(np.random.Philox(key=seed))
        self.failures = 0

    def append(self, payload: bytes) -> None:
        if self._gen.random() < self.fail_prob:
            self.failures += 1
            raise StoreWriteError("injected failure")
        self.inner.append(payload)

    def flush(self) -> None:
        self.inner.flush()


def iter_records(payloads: Iterable[bytes]):
    from .records import decode_record

    for payload in payloads:
        yield decode_record(payload)
