"""Browser access: static file serving, the form-schema config document,
and a WebSocket endpoint that adapts ws text messages to wire frames.

One ws text message carries exactly one JSON frame; replies and
subscription events come back the same way.  The handshake and framing
follow RFC 6455 far enough for browsers and test clients; permessage
extensions and fragmented client frames are out of scope.
"""

from __future__ import annotations

import base64
import hashlib
import http.server
import json
import struct
import threading

from .service import Connection, KernelHost, RequestBroker

WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"

PLACEHOLDER_INDEX = """<!doctype html>
<html><head><meta charset="utf-8"><title>beamctl</title></head>
<body><h1>beamctl gateway</h1>
<p>No UI bundle is installed. The wire protocol is available at
<code>/ws</code> and the form schema at <code>/ui-config</code>.</p>
</body></html>
"""


def ui_config(config) -> dict:
    """Form schema and endpoints for the web console.  Config-driven so
    deployments can reshape the dialogue without rebuilding the UI."""
    return {
        "endpoint": {"websocket": "/ws"},
        "instrument": "YuMO (simulated)",
        "changer_size": config.sample_table,
        "detectors": [1, 2],
        "fields": [
            {"name": "user", "kind": "text", "label": "User name",
             "required": True},
            {"name": "file_base", "kind": "text", "label": "File base",
             "pattern": "[A-Za-z0-9_]+", "required": True},
            {"name": "samples", "kind": "sample_list", "label": "Samples",
             "columns": ["name", "position", "thickness_mm"],
             "min_rows": 1},
            {"name": "count_limit", "kind": "int", "label": "Count limit",
             "min": 1, "default": 2000},
            {"name": "time_limit", "kind": "int", "label": "Time limit (s)",
             "min": 1, "default": 1000},
            {"name": "detectors", "kind": "detector_pair",
             "label": "Detector pair", "default": [1, 2]},
            {"name": "temperature", "kind": "real",
             "label": "Temperature setpoint (C)", "optional": True},
            {"name": "temperature_tol", "kind": "real",
             "label": "Temperature tolerance", "min": 0.0, "default": 0.1,
             "exclusive_min": True},
            {"name": "vanadium_out", "kind": "toggle",
             "label": "Vanadium standards out of beam", "default": True},
            {"name": "env_monitor", "kind": "toggle",
             "label": "Environment monitoring", "default": True},
        ],
    }


# -- RFC 6455 framing --

def ws_accept_key(client_key: str) -> str:
    digest = hashlib.sha1((client_key + WS_GUID).encode("ascii")).digest()
    return base64.b64encode(digest).decode("ascii")


def ws_read_frame(rfile) -> tuple[int, bytes] | None:
    """Read one frame; returns (opcode, payload) or None at EOF."""
    head = rfile.read(2)
    if len(head) < 2:
        return None
    opcode = head[0] & 0x0F
    masked = bool(head[1] & 0x80)
    length = head[1] & 0x7F
    if length == 126:
        length = struct.unpack(">H", rfile.read(2))[0]
    elif length == 127:
        length = struct.unpack(">Q", rfile.read(8))[0]
    mask = rfile.read(4) if masked else b""
    payload = rfile.read(length)
    if len(payload) < length:
        return None
    if masked:
        payload = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
    return opcode, payload


def ws_write_frame(wfile, opcode: int, payload: bytes) -> None:
    n = len(payload)
    head = bytes([0x80 | opcode])
    if n < 126:
        head += bytes([n])
    elif n < 1 << 16:
        head += bytes([126]) + struct.pack(">H", n)
    else:
        head += bytes([127]) + struct.pack(">Q", n)
    wfile.write(head + payload)
    wfile.flush()


class _BridgeHandler(http.server.SimpleHTTPRequestHandler):
    server_version = "beamctl-bridge"
    protocol_version = "HTTP/1.1"

    def log_message(self, *args) -> None:
        pass  # quiet; the supervisor log is the record of note

    def do_GET(self) -> None:
        if self.path == "/ws" and "upgrade" in self.headers.get(
                "Connection", "").lower():
            self._serve_websocket()
            return
        if self.path in ("/ui-config", "/ui-config.json"):
            body = json.dumps(ui_config(self.server.kernel_config),
                              sort_keys=True).encode("utf-8")
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)
            return
        if self.server.ui_root is None:
            body = PLACEHOLDER_INDEX.encode("utf-8")
            self.send_response(200)
            self.send_header("Content-Type", "text/html; charset=utf-8")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)
            return
        super().do_GET()

    # -- the adapter itself --

    def _serve_websocket(self) -> None:
        key = self.headers.get("Sec-WebSocket-Key")
        if not key:
            self.send_error(400, "missing Sec-WebSocket-Key")
            return
        self.send_response(101, "Switching Protocols")
        self.send_header("Upgrade", "websocket")
        self.send_header("Connection", "Upgrade")
        self.send_header("Sec-WebSocket-Accept", ws_accept_key(key))
        self.end_headers()
        self.close_connection = True

        conn = Connection(self.server.broker)
        write_lock = threading.Lock()

        def push(data: bytes) -> None:
            with write_lock:
                ws_write_frame(self.wfile, 0x1, data.rstrip(b"\n"))

        writer = threading.Thread(target=conn._writer_loop, args=(push,),
                                  daemon=True)
        writer.start()
        try:
            while not conn.closed.is_set():
                frame = ws_read_frame(self.rfile)
                if frame is None:
                    break
                opcode, payload = frame
                if opcode == 0x8:  # close
                    with write_lock:
                        ws_write_frame(self.wfile, 0x8, b"")
                    break
                if opcode == 0x9:  # ping
                    with write_lock:
                        ws_write_frame(self.wfile, 0xA, payload)
                    continue
                if opcode != 0x1:
                    continue
                if self.server.host_obj.blocked():
                    continue  # nonfatal fault: drop reads, keep the socket
                for line in payload.split(b"\n"):
                    if line.strip():
                        conn.handle_line(line)
        except OSError:
            pass
        finally:
            conn.close()


class _BridgeServer(http.server.ThreadingHTTPServer):
    daemon_threads = True


class WebBridge:
    """HTTP front: `/` static UI, `/ui-config` schema, `/ws` wire frames."""

    def __init__(self, host: KernelHost, bind_host: str = "127.0.0.1",
                 port: int = 0, ui_root=None):
        self.host = host
        self.broker = RequestBroker(host)

        root = str(ui_root) if ui_root is not None else None
        handler = _BridgeHandler
        if root is not None:
            handler = type("_RootedHandler", (_BridgeHandler,), {})
            # SimpleHTTPRequestHandler reads `directory` per instance
            handler.__init__ = (
                lambda s, *a, directory=root, **k:
                _BridgeHandler.__init__(s, *a, directory=directory, **k))
        self._httpd = _BridgeServer((bind_host, port), handler)
        self._httpd.broker = self.broker
        self._httpd.host_obj = host
        self._httpd.kernel_config = host.supervisor.config
        self._httpd.ui_root = root
        self.port = self._httpd.server_address[1]
        self._thread: threading.Thread | None = None

    def start(self) -> None:
        self._thread = threading.Thread(target=self._httpd.serve_forever,
                                        name="web-bridge", daemon=True)
        self._thread.start()

    def close(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
