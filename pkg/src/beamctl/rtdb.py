"""Real-time variable database.

The single communication medium between device residents and user
interfaces: a hierarchical, typed, revisioned key-value store with prefix
subscriptions and whole-state snapshot save/restore.

Snapshot text format (frozen):
    line 1:  SNIX1 <global_revision> <iso8601_time>
    then one line per record, sorted bytewise by path:
        <path>\t<tag>\t<encoded value>
    tags: I (64-bit signed int), R (binary64 float, shortest round-trip
    decimal), T (text, with TAB/NL/% percent-encoded), A (comma-separated
    int array).
"""

from __future__ import annotations

import math
import re
import threading
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Callable, Iterable

VIRTUAL_EPOCH = datetime(2002, 5, 15, tzinfo=timezone.utc)

_SEGMENT_RE = re.compile(r"[A-Za-z0-9_-]+\Z")
_INT64_MIN = -(2 ** 63)
_INT64_MAX = 2 ** 63 - 1


class DbError(Exception):
    pass


class TypeMismatch(DbError):
    pass


class InvalidValue(DbError):
    pass


class NotFound(DbError):
    pass


class FormatError(DbError):
    pass


class StreamClosed(DbError):
    pass


def iso_time(seconds: float) -> str:
    """Render virtual seconds-since-epoch as an ISO-8601 UTC instant."""
    stamp = VIRTUAL_EPOCH + timedelta(seconds=seconds)
    return stamp.strftime("%Y-%m-%dT%H:%M:%S.%f") + "Z"


def parse_iso(text: str) -> float:
    if not text.endswith("Z"):
        raise FormatError(f"bad timestamp {text!r}")
    try:
        stamp = datetime.strptime(text[:-1], "%Y-%m-%dT%H:%M:%S.%f")
    except ValueError as exc:
        raise FormatError(f"bad timestamp {text!r}") from exc
    return (stamp.replace(tzinfo=timezone.utc) - VIRTUAL_EPOCH).total_seconds()


class VarPath:
    """Slash-separated hierarchy of identifier segments, e.g. /daq/tofa/state."""

    __slots__ = ("segments",)

    def __init__(self, segments: Iterable[str]):
        segs = tuple(segments)
        if not segs:
            raise InvalidValue("path needs at least one segment")
        for seg in segs:
            if not _SEGMENT_RE.match(seg):
                raise InvalidValue(f"bad path segment {seg!r}")
        object.__setattr__(self, "segments", segs)

    def __setattr__(self, name, value):
        raise AttributeError("VarPath is immutable")

    @classmethod
    def parse(cls, text: str) -> "VarPath":
        return cls(text.strip("/").split("/")) if text.strip("/") else cls(())

    def render(self) -> str:
        return "/" + "/".join(self.segments)

    def __str__(self) -> str:
        return self.render()

    def __repr__(self) -> str:
        return f"VarPath({self.render()!r})"

    def __eq__(self, other) -> bool:
        return isinstance(other, VarPath) and self.segments == other.segments

    def __hash__(self) -> int:
        return hash(self.segments)

    def __lt__(self, other: "VarPath") -> bool:
        return self.render() < other.render()


def _as_segments(path) -> tuple[str, ...]:
    """Accept VarPath, rendered string, or None/'' (meaning: everything)."""
    if path is None:
        return ()
    if isinstance(path, VarPath):
        return path.segments
    if isinstance(path, str):
        if path.strip("/") == "":
            return ()
        return VarPath.parse(path).segments
    raise InvalidValue(f"not a path: {path!r}")


@dataclass(frozen=True)
class Value:
    """Tagged union: I=Int, R=Real, T=Text, A=IntArray."""

    tag: str
    data: object

    @staticmethod
    def int(n: int) -> "Value":
        if isinstance(n, bool) or not isinstance(n, int):
            raise InvalidValue(f"not an int: {n!r}")
        if not _INT64_MIN <= n <= _INT64_MAX:
            raise InvalidValue(f"int out of 64-bit range: {n}")
        return Value("I", n)

    @staticmethod
    def real(x: float) -> "Value":
        x = float(x)
        if math.isnan(x):
            raise InvalidValue("NaN rejected")
        return Value("R", x)

    @staticmethod
    def text(s: str) -> "Value":
        if not isinstance(s, str):
            raise InvalidValue(f"not text: {s!r}")
        if "\x00" in s:
            raise InvalidValue("NUL rejected in text")
        return Value("T", s)

    @staticmethod
    def array(items: Iterable[int]) -> "Value":
        out = []
        for n in items:
            if isinstance(n, bool) or not isinstance(n, int):
                raise InvalidValue(f"array element not an int: {n!r}")
            if not _INT64_MIN <= n <= _INT64_MAX:
                raise InvalidValue(f"array element out of range: {n}")
            out.append(n)
        return Value("A", tuple(out))

    def encode(self) -> str:
        if self.tag == "I":
            return str(self.data)
        if self.tag == "R":
            return repr(self.data)
        if self.tag == "T":
            s = self.data.replace("%", "%25")
            return s.replace("\t", "%09").replace("\n", "%0A")
        if self.tag == "A":
            return ",".join(str(n) for n in self.data)
        raise InvalidValue(f"unknown tag {self.tag!r}")

    @staticmethod
    def decode(tag: str, text: str) -> "Value":
        try:
            if tag == "I":
                return Value.int(int(text))
            if tag == "R":
                return Value.real(float(text))
            if tag == "T":
                s = text.replace("%0A", "\n").replace("%09", "\t")
                return Value.text(s.replace("%25", "%"))
            if tag == "A":
                if text == "":
                    return Value.array(())
                return Value.array(int(n) for n in text.split(","))
        except (ValueError, InvalidValue) as exc:
            raise FormatError(f"bad {tag} value {text!r}: {exc}") from exc
        raise FormatError(f"unknown value tag {tag!r}")

    def as_python(self):
        return list(self.data) if self.tag == "A" else self.data


def as_value(obj) -> Value:
    """Coerce a plain Python object to the matching tagged value."""
    if isinstance(obj, Value):
        return obj
    if isinstance(obj, bool):
        raise InvalidValue("bool is not a database type")
    if isinstance(obj, int):
        return Value.int(obj)
    if isinstance(obj, float):
        return Value.real(obj)
    if isinstance(obj, str):
        return Value.text(obj)
    if isinstance(obj, (list, tuple)):
        return Value.array(obj)
    raise InvalidValue(f"no database type for {obj!r}")


@dataclass(frozen=True)
class DbEntry:
    path: VarPath
    value: Value
    revision: int
    wall_time: float
    writer: str


@dataclass(frozen=True)
class Snapshot:
    """Atomic full-state image: header revision/time plus sorted records."""

    revision: int
    time: float
    records: tuple  # of (path_str, Value, revision)

    def to_text(self) -> str:
        lines = [f"SNIX1 {self.revision} {iso_time(self.time)}"]
        for path_str, value, _rev in self.records:
            lines.append(f"{path_str}\t{value.tag}\t{value.encode()}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Snapshot":
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if not lines:
            raise FormatError("empty snapshot")
        head = lines[0].split(" ")
        if len(head) != 3 or head[0] != "SNIX1":
            raise FormatError(f"bad snapshot header {lines[0]!r}")
        try:
            revision = int(head[1])
        except ValueError as exc:
            raise FormatError(f"bad revision {head[1]!r}") from exc
        time = parse_iso(head[2])
        records = []
        for i, line in enumerate(lines[1:], start=2):
            parts = line.split("\t", 2)
            if len(parts) != 3:
                raise FormatError(f"snapshot line {i}: expected 3 fields")
            path_str, tag, enc = parts
            VarPath.parse(path_str)  # validates
            records.append((path_str, Value.decode(tag, enc), revision))
        return cls(revision, time, tuple(records))


class Subscription:
    """Ordered change stream for one prefix.  Thread-safe consumer side."""

    def __init__(self, db: "Rtdb", prefix: tuple[str, ...]):
        self._db = db
        self.prefix = prefix
        self._events: deque[DbEntry] = deque()
        self._cond = threading.Condition()
        self._closed = False

    def _push(self, entry: DbEntry) -> None:
        with self._cond:
            if not self._closed:
                self._events.append(entry)
                self._cond.notify_all()

    def pop(self, timeout: float | None = None) -> DbEntry:
        """Next event, blocking.  Raises StreamClosed once closed and drained."""
        with self._cond:
            if not self._events and timeout is not None:
                self._cond.wait_for(lambda: self._events or self._closed, timeout)
            while not self._events:
                if self._closed:
                    raise StreamClosed("subscription closed")
                if timeout is not None:
                    raise StreamClosed("timed out")
                self._cond.wait()
            return self._events.popleft()

    def pending(self) -> int:
        with self._cond:
            return len(self._events)

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()
        self._db._drop_subscription(self)


class Rtdb:
    """The variable database.  `clock` supplies virtual wall time."""

    def __init__(self, clock: Callable[[], float] | None = None):
        self._clock = clock or (lambda: 0.0)
        self._lock = threading.RLock()
        self._entries: dict[tuple[str, ...], DbEntry] = {}
        self._revision = 0
        self._subs: list[Subscription] = []
        self._watches: list[tuple[tuple[str, ...], Callable[[DbEntry], None]]] = []

    # -- core ops ---------------------------------------------------------

    def set_var(self, path, value, writer: str = "?") -> int:
        if not isinstance(path, VarPath):
            path = VarPath.parse(path)
        value = as_value(value)
        with self._lock:
            old = self._entries.get(path.segments)
            if old is not None and old.value.tag != value.tag:
                raise TypeMismatch(
                    f"{path} holds {old.value.tag}, refusing {value.tag}")
            self._revision += 1
            entry = DbEntry(path, value, self._revision, self._clock(), writer)
            self._entries[path.segments] = entry
            for sub in self._subs:
                if path.segments[:len(sub.prefix)] == sub.prefix:
                    sub._push(entry)
            for prefix, fn in list(self._watches):
                if path.segments[:len(prefix)] == prefix:
                    fn(entry)
            return entry.revision

    def get_var(self, path) -> DbEntry:
        if not isinstance(path, VarPath):
            path = VarPath.parse(path)
        with self._lock:
            entry = self._entries.get(path.segments)
        if entry is None:
            raise NotFound(f"not found: {path.render()}")
        return entry

    def try_get(self, path) -> DbEntry | None:
        try:
            return self.get_var(path)
        except NotFound:
            return None

    def list_vars(self, prefix=None) -> list[VarPath]:
        pre = _as_segments(prefix)
        with self._lock:
            keys = [k for k in self._entries if k[:len(pre)] == pre]
        return sorted((VarPath(k) for k in keys), key=lambda p: p.render())

    def subscribe(self, prefix=None) -> Subscription:
        sub = Subscription(self, _as_segments(prefix))
        with self._lock:
            self._subs.append(sub)
        return sub

    def watch(self, prefix, fn: Callable[[DbEntry], None]) -> Callable[[], None]:
        """Synchronous in-process change hook (fires under the db lock).

        For kernel-internal wakeups; network subscribers use subscribe().
        Returns an unregister function.
        """
        item = (_as_segments(prefix), fn)
        with self._lock:
            self._watches.append(item)

        def cancel():
            with self._lock:
                if item in self._watches:
                    self._watches.remove(item)
        return cancel

    def _drop_subscription(self, sub: Subscription) -> None:
        with self._lock:
            if sub in self._subs:
                self._subs.remove(sub)

    # -- snapshots ----------------------------------------------------------

    def save_snapshot(self, exclude_prefix=None) -> Snapshot:
        """Atomic image of the whole database at one revision.

        `exclude_prefix` omits one subtree (used to keep the recovery image
        itself out of recursive captures).
        """
        ex = _as_segments(exclude_prefix) if exclude_prefix is not None else None
        with self._lock:
            records = []
            for segs, entry in self._entries.items():
                if ex and segs[:len(ex)] == ex:
                    continue
                records.append((VarPath(segs).render(), entry.value, entry.revision))
            records.sort(key=lambda r: r[0])
            return Snapshot(self._revision, self._clock(), tuple(records))

    def restore_snapshot(self, snapshot: Snapshot) -> None:
        """Replace all content with the snapshot; revisions resume above its header."""
        now = self._clock()
        with self._lock:
            entries: dict[tuple[str, ...], DbEntry] = {}
            for path_str, value, rev in snapshot.records:
                path = VarPath.parse(path_str)
                if path.segments in entries:
                    raise FormatError(f"duplicate path {path_str}")
                entries[path.segments] = DbEntry(path, value, rev, now, "restore")
            self._entries = entries
            self._revision = max(snapshot.revision, self._revision)

    # -- conveniences -------------------------------------------------------

    def get_text(self, path, default: str | None = None) -> str:
        entry = self.try_get(path)
        if entry is None:
            if default is None:
                raise NotFound(f"not found: {path}")
            return default
        return entry.value.data

    def get_int(self, path, default: int | None = None) -> int:
        entry = self.try_get(path)
        if entry is None:
            if default is None:
                raise NotFound(f"not found: {path}")
            return default
        return entry.value.data

    def get_real(self, path, default: float | None = None) -> float:
        entry = self.try_get(path)
        if entry is None:
            if default is None:
                raise NotFound(f"not found: {path}")
            return default
        return entry.value.data
