"""Client side of the gateway protocol.

Both transports speak the same one-JSON-object-per-line framing, so the
reply matching, event routing, and timeout handling live in a shared
base; only how bytes move differs.
"""

from __future__ import annotations

import queue
import socket
import threading
import time

from .dpm import DpmEndpoint
from .service import DEFAULT_PORT
from .wire import decode_frame, encode_frame


class ClientError(Exception):
    pass


class RequestTimeout(ClientError):
    pass


class ConnectionLost(ClientError):
    pass


class _BaseClient:
    def __init__(self, timeout: float = 10.0):
        self.timeout = timeout
        self._next_id = 1
        self._id_lock = threading.Lock()
        self._replies: dict[int, tuple[dict, bytes]] = {}
        self._reply_cond = threading.Condition()
        self.events: queue.Queue = queue.Queue()
        self._dead = threading.Event()

    # transport hooks
    def _send_bytes(self, data: bytes) -> None:
        raise NotImplementedError

    def _close_transport(self) -> None:
        raise NotImplementedError

    def _feed_line(self, line: bytes) -> None:
        try:
            obj = decode_frame(line)
        except Exception:  # noqa: BLE001 - a broken frame kills the session
            self._dead.set()
            return
        if "event" in obj:
            self.events.put(obj)
            return
        with self._reply_cond:
            self._replies[obj.get("id", 0)] = (obj, line)
            self._reply_cond.notify_all()

    def _mark_dead(self) -> None:
        self._dead.set()
        with self._reply_cond:
            self._reply_cond.notify_all()

    # public API

    def send_raw(self, data: bytes) -> None:
        """Ship bytes as-is (for malformed-frame tests)."""
        self._send_bytes(data)

    def wait_reply(self, rid: int, timeout: float = 10.0,
                   what: str = "request") -> tuple[dict, bytes]:
        deadline = time.monotonic() + timeout
        with self._reply_cond:
            while rid not in self._replies:
                if self._dead.is_set():
                    raise ConnectionLost("gateway connection lost")
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise RequestTimeout(f"no reply to {what} within {timeout}s")
                self._reply_cond.wait(min(remaining, 0.1))
            return self._replies.pop(rid)

    def request_raw(self, verb: str, timeout: float | None = None,
                    **fields) -> tuple[dict, bytes]:
        """Send one request; return (reply object, raw reply line)."""
        with self._id_lock:
            rid = self._next_id
            self._next_id += 1
        frame = {"id": rid, "verb": verb}
        frame.update(fields)
        self._send_bytes(encode_frame(frame))
        return self.wait_reply(rid, timeout if timeout is not None
                               else self.timeout, what=verb)

    def request(self, verb: str, timeout: float | None = None,
                **fields) -> dict:
        return self.request_raw(verb, timeout, **fields)[0]

    def call(self, verb: str, timeout: float | None = None,
             **fields) -> dict:
        """request(), but an error reply raises ClientError."""
        reply = self.request(verb, timeout, **fields)
        if not reply.get("ok"):
            raise ClientError(reply.get("error", "request failed"))
        return reply

    def next_event(self, timeout: float = 5.0) -> dict:
        try:
            return self.events.get(timeout=timeout)
        except queue.Empty:
            raise RequestTimeout("no event arrived") from None

    @property
    def alive(self) -> bool:
        return not self._dead.is_set()

    def close(self) -> None:
        self._dead.set()
        self._close_transport()


class StreamClient(_BaseClient):
    """TCP line-frame client."""

    def __init__(self, host: str = "127.0.0.1", port: int = DEFAULT_PORT,
                 connect_timeout: float = 5.0, timeout: float = 10.0):
        super().__init__(timeout=timeout)
        self.sock = socket.create_connection((host, port),
                                             timeout=connect_timeout)
        self.sock.settimeout(0.1)
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def _read_loop(self) -> None:
        buf = b""
        while not self._dead.is_set():
            try:
                data = self.sock.recv(65536)
            except socket.timeout:
                continue
            except OSError:
                break
            if not data:
                break
            buf += data
            while b"\n" in buf:
                line, buf = buf.split(b"\n", 1)
                if line:
                    self._feed_line(line)
        self._mark_dead()

    def _send_bytes(self, data: bytes) -> None:
        if self._dead.is_set():
            raise ConnectionLost("gateway connection lost")
        try:
            self.sock.sendall(data)
        except OSError as exc:
            self._mark_dead()
            raise ConnectionLost(str(exc)) from exc

    def _close_transport(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


class DpmClient(_BaseClient):
    """Shared-window client; attaches to the client side of the rings."""

    def __init__(self, window_path, timeout: float = 10.0):
        super().__init__(timeout=timeout)
        self.endpoint = DpmEndpoint(window_path, "client")
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def _read_loop(self) -> None:
        while not self._dead.is_set():
            msg = self.endpoint.read_message(timeout=0.1)
            if msg is None:
                continue
            for line in msg.split(b"\n"):
                if line:
                    self._feed_line(line)
        self._mark_dead()

    def _send_bytes(self, data: bytes) -> None:
        if self._dead.is_set():
            raise ConnectionLost("gateway connection lost")
        self.endpoint.write_message(data, timeout=10.0)

    def _close_transport(self) -> None:
        self.endpoint.close()
