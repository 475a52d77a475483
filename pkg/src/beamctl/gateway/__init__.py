"""Remote access to a running kernel: wire framing, fault model, and the
stream / dual-port-memory transports."""

from .client import (
    ClientError,
    ConnectionLost,
    DpmClient,
    RequestTimeout,
    StreamClient,
)
from .dpm import BusyEndpoint, DpmEndpoint, DpmError, create_window
from .faults import FaultDriver, FaultModel, FaultProcess, fault_tick
from .service import (
    DEFAULT_PORT,
    BindError,
    DpmServer,
    GatewayError,
    KernelHost,
    RequestBroker,
    StreamServer,
)
from .wire import (
    VERBS,
    WireError,
    decode_frame,
    encode_frame,
    error_reply,
    event_frame,
    ok_reply,
)

__all__ = [
    "VERBS",
    "DEFAULT_PORT",
    "BindError",
    "BusyEndpoint",
    "ClientError",
    "ConnectionLost",
    "DpmClient",
    "DpmEndpoint",
    "DpmError",
    "DpmServer",
    "FaultDriver",
    "FaultModel",
    "FaultProcess",
    "GatewayError",
    "KernelHost",
    "RequestBroker",
    "RequestTimeout",
    "StreamClient",
    "StreamServer",
    "WireError",
    "create_window",
    "decode_frame",
    "encode_frame",
    "error_reply",
    "event_frame",
    "fault_tick",
    "ok_reply",
]
