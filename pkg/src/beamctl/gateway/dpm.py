"""Simulated 128 KiB dual-port-memory window over a memory-mapped file.

Layout: two independent 65536-byte rings, host-to-kernel at offset 0 and
kernel-to-host at offset 65536.  Each ring holds its own 8-byte write and
read counters (absolute, monotone) followed by 65520 data bytes.  Messages
are framed as chunks `u32 length | u8 last | payload`; a message bigger
than the free window is split into sequenced chunks and reassembled by the
reader, so arbitrarily large payloads flow through the fixed window with
plain FIFO backpressure.
"""

from __future__ import annotations

import mmap
import struct
import threading
import time
from pathlib import Path

DPM_SIZE = 131072
RING_SIZE = DPM_SIZE // 2
DATA_SIZE = RING_SIZE - 16
CHUNK_HEADER = struct.Struct("<IB")
MAX_CHUNK = DATA_SIZE - CHUNK_HEADER.size

_IDX = struct.Struct("<Q")


class DpmError(Exception):
    pass


class BusyEndpoint(DpmError):
    """A second writer/reader tried to attach to the same direction."""


def create_window(path) -> Path:
    """Allocate (or reset) a window file of exactly DPM_SIZE zero bytes."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(b"\x00" * DPM_SIZE)
    return path


class _Ring:
    """One direction.  The writer owns the write counter, the reader the
    read counter; both are absolute byte counts mapped into the data area
    modulo its size."""

    def __init__(self, mm: mmap.mmap, base: int):
        self.mm = mm
        self.base = base

    def _get(self, off: int) -> int:
        return _IDX.unpack_from(self.mm, self.base + off)[0]

    def _set(self, off: int, value: int) -> None:
        _IDX.pack_into(self.mm, self.base + off, value)

    @property
    def write_idx(self) -> int:
        return self._get(0)

    @write_idx.setter
    def write_idx(self, v: int) -> None:
        self._set(0, v)

    @property
    def read_idx(self) -> int:
        return self._get(8)

    @read_idx.setter
    def read_idx(self, v: int) -> None:
        self._set(8, v)

    def used(self) -> int:
        return self.write_idx - self.read_idx

    def free(self) -> int:
        return DATA_SIZE - self.used()

    def put(self, data: bytes) -> None:
        """Copy `data` in at the write counter; caller checked free space."""
        w = self.write_idx
        pos = w % DATA_SIZE
        first = min(len(data), DATA_SIZE - pos)
        start = self.base + 16
        self.mm[start + pos:start + pos + first] = data[:first]
        if first < len(data):
            self.mm[start:start + len(data) - first] = data[first:]
        self.write_idx = w + len(data)

    def take(self, n: int) -> bytes:
        r = self.read_idx
        pos = r % DATA_SIZE
        first = min(n, DATA_SIZE - pos)
        start = self.base + 16
        out = bytes(self.mm[start + pos:start + pos + first])
        if first < n:
            out += bytes(self.mm[start:start + n - first])
        self.read_idx = r + n
        return out

    def peek(self, n: int) -> bytes:
        r = self.read_idx
        pos = r % DATA_SIZE
        first = min(n, DATA_SIZE - pos)
        start = self.base + 16
        out = bytes(self.mm[start + pos:start + pos + first])
        if first < n:
            out += bytes(self.mm[start:start + n - first])
        return out


_attached: set[tuple[str, str]] = set()
_attach_lock = threading.Lock()


class DpmEndpoint:
    """One side of the window.  role `client` writes host-to-kernel and
    reads kernel-to-host; role `server` is the mirror image.  Strictly one
    endpoint per (file, role)."""

    POLL = 0.0005

    def __init__(self, path, role: str):
        if role not in ("client", "server"):
            raise DpmError(f"bad role {role!r}")
        self.path = str(Path(path).resolve())
        self.role = role
        with _attach_lock:
            key = (self.path, role)
            if key in _attached:
                raise BusyEndpoint(f"{role} already attached to {self.path}")
            _attached.add(key)
        self._fh = open(self.path, "r+b")
        self.mm = mmap.mmap(self._fh.fileno(), DPM_SIZE)
        a = _Ring(self.mm, 0)
        b = _Ring(self.mm, RING_SIZE)
        self.out_ring = a if role == "client" else b
        self.in_ring = b if role == "client" else a
        self._closed = False

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        with _attach_lock:
            _attached.discard((self.path, self.role))
        self.mm.close()
        self._fh.close()

    # -- writing --

    def write_message(self, data: bytes, timeout: float | None = None) -> int:
        """Send one message, chunking to fit the window.  Returns the
        number of chunks written; blocks while the ring is full."""
        deadline = None if timeout is None else time.monotonic() + timeout
        view = memoryview(data)
        chunks = 0
        sent_any = False
        while not sent_any or len(view):
            if self._closed:
                raise DpmError("endpoint closed")
            try:
                free = self.out_ring.free()
            except ValueError:
                raise DpmError("endpoint closed") from None
            if free <= CHUNK_HEADER.size:
                if deadline is not None and time.monotonic() > deadline:
                    raise DpmError("write timed out (ring full)")
                time.sleep(self.POLL)
                continue
            n = min(len(view), free - CHUNK_HEADER.size, MAX_CHUNK)
            last = 1 if n == len(view) else 0
            self.out_ring.put(CHUNK_HEADER.pack(n, last) + bytes(view[:n]))
            view = view[n:]
            chunks += 1
            sent_any = True
        return chunks

    # -- reading --

    def _wait_bytes(self, n: int, deadline) -> bool:
        # a concurrent close() invalidates the mmap mid-poll; treat that
        # the same as the closed flag
        while True:
            if self._closed:
                return False
            try:
                if self.in_ring.used() >= n:
                    return True
            except ValueError:
                return False
            if deadline is not None and time.monotonic() > deadline:
                return False
            time.sleep(self.POLL)

    def read_message(self, timeout: float | None = None) -> bytes | None:
        """Receive one whole message (reassembling chunks); None on timeout."""
        deadline = None if timeout is None else time.monotonic() + timeout
        out = bytearray()
        while True:
            if not self._wait_bytes(CHUNK_HEADER.size, deadline):
                return None
            try:
                n, last = CHUNK_HEADER.unpack(
                    self.in_ring.peek(CHUNK_HEADER.size))
                if not self._wait_bytes(CHUNK_HEADER.size + n, deadline):
                    return None
                self.in_ring.take(CHUNK_HEADER.size)
                out += self.in_ring.take(n)
            except ValueError:
                return None
            if last:
                return bytes(out)
