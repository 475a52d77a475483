"""Request broker and transport servers.

One KernelHost owns the supervisor (and through it the kernel) plus a
single lock; a pump thread advances the virtual clock while a run is in
flight.  Transport servers (TCP stream, dual-port-memory window) feed
decoded frames to the shared RequestBroker under that lock, so requests
interleave with simulation events at event boundaries only.

A nonfatal fault blocks the transports (no reads, no accepts) while the
kernel keeps measuring; a fatal fault crashes the kernel, drops every
client, and the supervisor's recovery brings the gateway back.
"""

from __future__ import annotations

import base64
import queue
import socket
import threading
import traceback

from .. import viz
from ..kernel import KernelConfig
from ..rtdb import DbError, Value, iso_time
from ..script import ParseError, ScriptError
from ..supervisor import Supervisor
from .dpm import DpmEndpoint, create_window
from .faults import FaultDriver, FaultModel
from .wire import (
    VERBS,
    WireError,
    decode_frame,
    encode_frame,
    error_reply,
    event_frame,
    ok_reply,
)

DEFAULT_PORT = 4690


class GatewayError(Exception):
    pass


class BindError(GatewayError):
    pass


class KernelHost:
    """Serialized access to one kernel plus the background pump."""

    def __init__(self, workdir, config: KernelConfig | None = None,
                 fault_model: FaultModel | None = None,
                 clock_factor: float = 0.0):
        self.supervisor = Supervisor(workdir, config)
        self.lock = threading.RLock()
        self.clock_factor = clock_factor
        self.faults = (FaultDriver(self.supervisor, fault_model)
                       if fault_model is not None else None)
        self._stop = threading.Event()
        self._pump_thread: threading.Thread | None = None
        self._crash_listeners: list = []
        self._crashes_seen = 0

    # -- lifecycle --

    def start(self) -> None:
        with self.lock:
            if self.supervisor.kernel is None:
                self.supervisor.boot()
            if self.faults is not None:
                self.faults.ensure_armed()
        self._pump_thread = threading.Thread(
            target=self._pump_loop, name="kernel-pump", daemon=True)
        self._pump_thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._pump_thread is not None:
            self._pump_thread.join(timeout=5.0)

    def on_crash(self, fn) -> None:
        self._crash_listeners.append(fn)

    # -- state peeks (lock-free reads of plain flags) --

    def blocked(self) -> bool:
        kernel = self.supervisor.kernel
        return bool(kernel is not None and kernel.gateway_blocked)

    def clear_nonfatal(self) -> None:
        with self.lock:
            self.supervisor.clear_nonfatal()

    def run_active(self) -> bool:
        task = self.supervisor.task
        return task is not None and not task.done

    # -- the pump --

    def _pump_loop(self) -> None:
        while not self._stop.is_set():
            try:
                active = self._pump_once()
            except Exception:  # noqa: BLE001 - keep serving; surface in stderr
                traceback.print_exc()
                active = False
            self._stop.wait(0.0005 if active else 0.01)

    def _pump_once(self) -> bool:
        with self.lock:
            sup = self.supervisor
            if sup.kernel is None:
                return False
            if self.faults is not None:
                self.faults.ensure_armed()
            before = sup.kernel.sim.now
            crashes = sup.watchdog.crash_count
            sup.pump(max_events=500)
            if self.faults is not None:
                self.faults.ensure_armed()
            if sup.watchdog.crash_count > self._crashes_seen:
                self._crashes_seen = sup.watchdog.crash_count
                listeners = list(self._crash_listeners)
            else:
                listeners = []
            dt = sup.kernel.sim.now - before
            active = self.run_active()
        for fn in listeners:
            fn()
        if self.clock_factor > 0 and dt > 0:
            self._stop.wait(dt / self.clock_factor)
        return active


class RequestBroker:
    """Verb dispatch.  Every call holds the host lock, so handlers see the
    database and simulation at an event boundary."""

    def __init__(self, host: KernelHost):
        self.host = host

    def handle(self, req: dict, conn: "Connection") -> dict:
        req_id = req.get("id", 0)
        verb = req.get("verb")
        if verb not in VERBS:
            return error_reply(req_id, f"unknown verb {verb!r}")
        with self.host.lock:
            try:
                return getattr(self, "_" + verb)(req_id, req, conn)
            except (DbError, GatewayError, ScriptError, KeyError,
                    TypeError, ValueError) as exc:
                return error_reply(req_id, str(exc))
            except Exception as exc:  # noqa: BLE001 - reply, don't drop the line
                traceback.print_exc()
                return error_reply(req_id, f"internal error: {exc}")

    # -- variable access --

    def _get(self, req_id, req, conn):
        entry = self.host.supervisor.kernel.db.get_var(str(req["path"]))
        return ok_reply(req_id, path=str(req["path"]), tag=entry.value.tag,
                        value=entry.value.as_python(), revision=entry.revision)

    def _set(self, req_id, req, conn):
        db = self.host.supervisor.kernel.db
        value = req["value"]
        tag = req.get("tag")
        if tag == "I":
            value = Value.int(int(value))
        elif tag == "R":
            value = Value.real(float(value))
        elif tag == "T":
            value = Value.text(str(value))
        elif tag == "A":
            value = Value.array(value)
        elif tag is not None:
            return error_reply(req_id, f"unknown tag {tag!r}")
        rev = db.set_var(str(req["path"]), value, writer="gateway")
        return ok_reply(req_id, revision=rev)

    def _list(self, req_id, req, conn):
        db = self.host.supervisor.kernel.db
        paths = [str(p) for p in db.list_vars(str(req.get("prefix", "/")))]
        return ok_reply(req_id, paths=paths)

    def _subscribe(self, req_id, req, conn):
        prefix = str(req.get("prefix", "/"))
        sub = self.host.supervisor.kernel.db.subscribe(prefix)
        conn.attach_subscription(req_id, sub)
        return ok_reply(req_id, subscribed=prefix)

    # -- script control --

    def _load_script(self, req_id, req, conn):
        sup = self.host.supervisor
        if self.host.run_active():
            return error_reply(req_id, "a run is in progress")
        try:
            program = sup.kernel.load_program(str(req["text"]))
        except ParseError as exc:
            return error_reply(req_id, str(exc), line=exc.line, kind="parse")
        sup.source = str(req["text"])
        return ok_reply(req_id, statements=len(program.statements),
                        checkpoints=list(program.checkpoints))

    def _start(self, req_id, req, conn):
        sup = self.host.supervisor
        kernel = sup.kernel
        if self.host.run_active():
            return error_reply(req_id, "a run is in progress")
        if kernel.program is None:
            return error_reply(req_id, "no script loaded")
        ordinal = int(req.get("from", 0))
        if ordinal:
            marks = kernel.program.checkpoints
            if not 1 <= ordinal <= len(marks):
                return error_reply(
                    req_id, f"checkpoint {ordinal} of {len(marks)} not found")
            index = marks[ordinal - 1]
        else:
            index = 0
        sup.task = kernel.start_run(from_index=index, initial_anchor=True)
        kernel.persist_state()
        return ok_reply(req_id, started_at=index)

    def _stop(self, req_id, req, conn):
        self.host.supervisor.stop_run()
        return ok_reply(req_id)

    def _pause(self, req_id, req, conn):
        interp = self.host.supervisor.kernel.interpreter
        if interp is None:
            return error_reply(req_id, "no run in progress")
        if bool(req.get("on", True)):
            interp.pause()
        else:
            interp.unpause()
        return ok_reply(req_id, hold=bool(req.get("on", True)))

    def _answer(self, req_id, req, conn):
        self.host.supervisor.kernel.answer(str(req["value"]))
        return ok_reply(req_id)

    # -- data --

    def _fetch_spectrum(self, req_id, req, conn):
        kernel = self.host.supervisor.kernel
        daq = kernel.residents["Tofa"]
        if daq.memory is None and not kernel.db.get_text("/daq/last_file", ""):
            return error_reply(req_id, "no data")
        h = viz.sample(daq)
        mode = str(req.get("mode", "compressed"))
        if mode == "compressed":
            factors = req.get("factors")
            container = viz.compress(h, factors)
        elif mode == "direct":
            container = viz.raw_container(h)
        else:
            return error_reply(req_id, f"unknown spectrum mode {mode!r}")
        blob = container.to_bytes()
        return ok_reply(req_id, mode=mode, dims=list(h.dims), total=h.total(),
                        maks_b64=base64.b64encode(blob).decode("ascii"))

    def _status(self, req_id, req, conn):
        sup = self.host.supervisor
        db = sup.kernel.db
        return ok_reply(
            req_id,
            status=db.get_text("/script/status", "idle"),
            last_completed=db.get_int("/script/last_completed", -1),
            time=iso_time(sup.kernel.sim.now),
            crash_count=sup.watchdog.crash_count,
            blocked=self.host.blocked(),
            question={
                "name": db.get_text("/script/question/name", ""),
                "prompt": db.get_text("/script/question/prompt", ""),
                "default": db.get_text("/script/question/default", ""),
            })

    def _inject_fault(self, req_id, req, conn):
        kind = str(req["kind"])
        self.host.supervisor.inject_fault(kind, after=float(req.get("after", 0.0)))
        return ok_reply(req_id, kind=kind)


class Connection:
    """One client: a reader loop (transport-specific), an outbound queue
    drained by a writer thread, and any live subscriptions."""

    def __init__(self, broker: RequestBroker):
        self.broker = broker
        self.outbox: queue.Queue = queue.Queue()
        self.closed = threading.Event()
        self._subs: list = []

    # -- outbound --

    def send(self, obj: dict) -> None:
        if not self.closed.is_set():
            self.outbox.put(encode_frame(obj))

    def _writer_loop(self, write_bytes) -> None:
        while not (self.closed.is_set() and self.outbox.empty()):
            try:
                data = self.outbox.get(timeout=0.1)
            except queue.Empty:
                continue
            try:
                write_bytes(data)
            except Exception:  # noqa: BLE001 - peer gone; drop the backlog
                break

    # -- subscriptions --

    def attach_subscription(self, req_id, sub) -> None:
        self._subs.append(sub)
        threading.Thread(target=self._forward_loop, args=(req_id, sub),
                         daemon=True).start()

    def _forward_loop(self, req_id, sub) -> None:
        from ..rtdb import StreamClosed
        while not self.closed.is_set():
            try:
                entry = sub.pop(timeout=0.2)
            except StreamClosed:
                if sub._closed:
                    break
                continue  # poll timeout; check the connection and retry
            self.send(event_frame(req_id, {
                "path": str(entry.path), "tag": entry.value.tag,
                "value": entry.value.as_python(), "revision": entry.revision,
                "time": iso_time(entry.wall_time)}))

    # -- inbound --

    def handle_line(self, line: bytes) -> None:
        try:
            req = decode_frame(line)
        except WireError as exc:
            self.send(error_reply(0, str(exc)))
            return
        self.send(self.broker.handle(req, self))

    def close(self) -> None:
        self.closed.set()
        for sub in self._subs:
            sub.close()


class StreamServer:
    """TCP transport: one JSON frame per line, any number of clients."""

    def __init__(self, host: KernelHost, bind_host: str = "127.0.0.1",
                 port: int = DEFAULT_PORT):
        self.host = host
        self.broker = RequestBroker(host)
        try:
            self._listener = socket.create_server((bind_host, port))
        except OSError as exc:
            raise BindError(f"cannot bind {bind_host}:{port}: {exc}") from exc
        self._listener.settimeout(0.1)
        self.port = self._listener.getsockname()[1]
        self._stop = threading.Event()
        self._conns: list[tuple[Connection, socket.socket]] = []
        self._threads: list[threading.Thread] = []
        host.on_crash(self.drop_clients)

    def start(self) -> None:
        t = threading.Thread(target=self._accept_loop, name="gw-accept",
                             daemon=True)
        t.start()
        self._threads.append(t)

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            if self.host.blocked():
                self._stop.wait(0.02)
                continue
            try:
                sock, _ = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            conn = Connection(self.broker)
            self._conns.append((conn, sock))
            threading.Thread(target=self._serve_client, args=(conn, sock),
                             daemon=True).start()

    def _serve_client(self, conn: Connection, sock: socket.socket) -> None:
        sock.settimeout(0.1)
        writer = threading.Thread(
            target=conn._writer_loop, args=(lambda b: sock.sendall(b),),
            daemon=True)
        writer.start()
        buf = b""
        try:
            while not self._stop.is_set() and not conn.closed.is_set():
                if self.host.blocked():
                    # nonfatal fault: hold all reads until reset/restart
                    self._stop.wait(0.02)
                    continue
                try:
                    data = sock.recv(65536)
                except socket.timeout:
                    continue
                except OSError:
                    break
                if not data:
                    break
                buf += data
                while b"\n" in buf:
                    if self.host.blocked():
                        break
                    line, buf = buf.split(b"\n", 1)
                    if line.strip():
                        conn.handle_line(line)
        finally:
            conn.close()
            try:
                sock.close()
            except OSError:
                pass

    def drop_clients(self) -> None:
        conns, self._conns = self._conns, []
        for conn, sock in conns:
            conn.close()
            try:
                sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                sock.close()
            except OSError:
                pass

    def close(self) -> None:
        self._stop.set()
        self.drop_clients()
        try:
            self._listener.close()
        except OSError:
            pass


class DpmServer:
    """Dual-port-memory transport: strictly one client, same verb set."""

    def __init__(self, host: KernelHost, window_path):
        self.host = host
        self.broker = RequestBroker(host)
        self.window_path = create_window(window_path)
        self.endpoint = DpmEndpoint(self.window_path, "server")
        self._stop = threading.Event()
        self.conn = Connection(self.broker)

    def start(self) -> None:
        threading.Thread(target=self._read_loop, name="dpm-read",
                         daemon=True).start()
        threading.Thread(
            target=self.conn._writer_loop,
            args=(lambda b: self.endpoint.write_message(b),),
            daemon=True).start()

    def _read_loop(self) -> None:
        while not self._stop.is_set():
            if self.host.blocked():
                self._stop.wait(0.02)
                continue
            msg = self.endpoint.read_message(timeout=0.1)
            if msg is None:
                continue
            for line in msg.split(b"\n"):
                if line:
                    self.conn.handle_line(line)

    def close(self) -> None:
        self._stop.set()
        self.conn.close()
        self.endpoint.close()
