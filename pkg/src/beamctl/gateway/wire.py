"""Frame codec: one JSON object per LF-terminated UTF-8 line.

Requests carry {id, verb, ...}; every reply echoes the id and carries an
`ok` boolean.  Subscription events reuse the subscribing id but carry an
`event` field instead of `ok`, so exactly one frame per id has `ok`.
Reply bytes are canonical (sorted keys, no spaces) so transport-equivalence
checks can compare them byte for byte.
"""

from __future__ import annotations

import json

VERBS = frozenset({
    "get", "set", "list", "subscribe", "load_script", "start", "stop",
    "pause", "answer", "fetch_spectrum", "status", "inject_fault",
})


class WireError(Exception):
    pass


def encode_frame(obj: dict) -> bytes:
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False, allow_nan=False)
    if "\n" in text:
        raise WireError("frame would contain an embedded newline")
    return text.encode("utf-8") + b"\n"


def decode_frame(line: bytes) -> dict:
    try:
        obj = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WireError(f"bad frame: {exc}") from exc
    if not isinstance(obj, dict):
        raise WireError("frame is not an object")
    return obj


def ok_reply(req_id, **fields) -> dict:
    return {"id": req_id, "ok": True, **fields}


def error_reply(req_id, message: str, **fields) -> dict:
    return {"id": req_id, "ok": False, "error": message, **fields}


def event_frame(req_id, event: dict) -> dict:
    return {"id": req_id, "event": event}
