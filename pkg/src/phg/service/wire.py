"""Line-delimited JSON wire protocol.

One UTF-8 JSON object per LF-terminated line, at most 1 MiB per line;
binary values travel base64-encoded.  Unknown fields are ignored so the
protocol can grow; unknown message types draw an error reply with code
400 at the session layer.

Message flow (C = client, K = coordinator, P = provider):

    P->K  {"type":"hello","role":"provider","proto":1,"algo":"pdq256",
           "provider_id":"P1","key_id":"<hex>"}
    K->P  {"type":"hello_ack","session":"..."}
    P->K  {"type":"index_put","session":"...","seq":0,
           "tokens":["<b64>",...],"last":false}        (<= 1000 per chunk)
    K->P  {"type":"index_ack","session":"...","count":N}   (after last)

    C->K  {"type":"hello","role":"client","proto":1,"algo":"pdq256"}
    K->C  {"type":"hello_ack","session":"...",
           "providers":[{"provider_id":"P1","key_id":"<hex>"}]}
    C->K  {"type":"blind_eval_req","session":"...","provider_id":"P1",
           "seq":0,"elements":["<b64>",...]}
    K->P  {"type":"blind_eval_req","session":"...","relay":"<id>",
           "elements":[...]}
    P->K  {"type":"blind_eval_resp","session":"...","relay":"<id>",
           "elements":[...]}
    K->C  {"type":"blind_eval_resp","session":"...","provider_id":"P1",
           "seq":0,"elements":[...]}
    C->K  {"type":"report_tokens","session":"...",
           "tokens":{"P1":["<b64>",...]}}
    K->P  {"type":"match_notify","session":"...","tokens":[...]}
    K->C  {"type":"report_ack","session":"...","providers_contacted":N,
           "tokens_sent":M}

Errors: {"type":"error","session":"...","code":<int>,"message":"..."}.
Codes: 400 malformed/unknown type, 404 unknown provider, 409 message out
of order for the session state (session then terminates), 413 oversize,
500 internal/relay failure.
"""

from __future__ import annotations

import base64
import binascii
import json
from dataclasses import dataclass, field

MAX_LINE = 1 << 20  # 1 MiB, including the trailing newline
MAX_CHUNK_TOKENS = 1000

MESSAGE_TYPES = frozenset(
    {
        "hello",
        "hello_ack",
        "index_put",
        "index_ack",
        "blind_eval_req",
        "blind_eval_resp",
        "report_tokens",
        "match_notify",
        "report_ack",
        "error",
    }
)


class MalformedMessageError(ValueError):
    """Line is not a JSON object with a string 'type'."""


class OversizeMessageError(ValueError):
    """Line exceeds the 1 MiB cap."""


@dataclass(frozen=True)
class WireMessage:
    """A decoded protocol message: its type plus all other fields."""

    type: str
    fields: dict = field(default_factory=dict)

    def get(self, key, default=None):
        return self.fields.get(key, default)

    def require(self, key, kind):
        """Fetch a field, checking its JSON type."""
        v = self.fields.get(key)
        if not isinstance(v, kind):
            raise MalformedMessageError(f"field {key!r} missing or not {kind.__name__}")
        return v


def encode_message(m: WireMessage) -> bytes:
    """One LF-terminated JSON line; refuses to build oversize lines."""
    doc = {"type": m.type, **m.fields}
    line = json.dumps(doc, separators=(",", ":"), sort_keys=True).encode("utf-8") + b"\n"
    if len(line) > MAX_LINE:
        raise OversizeMessageError(f"encoded message is {len(line)} bytes")
    return line


def decode_message(line: bytes) -> WireMessage:
    """Parse one line; raises Oversize/Malformed accordingly."""
    if len(line) > MAX_LINE:
        raise OversizeMessageError(f"line of {len(line)} bytes exceeds {MAX_LINE}")
    try:
        doc = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise MalformedMessageError(f"bad JSON line: {e}") from None
    if not isinstance(doc, dict):
        raise MalformedMessageError("line is not a JSON object")
    mtype = doc.pop("type", None)
    if not isinstance(mtype, str):
        raise MalformedMessageError("missing string 'type'")
    return WireMessage(type=mtype, fields=doc)


def read_message(stream) -> WireMessage | None:
    """Next message from a binary stream; None at EOF."""
    line = stream.readline(MAX_LINE + 1)
    if not line:
        return None
    if len(line) > MAX_LINE:
        raise OversizeMessageError("incoming line exceeds the cap")
    return decode_message(line)


def b64e(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def b64d(text: str) -> bytes:
    if not isinstance(text, str):
        raise MalformedMessageError("expected a base64 string")
    try:
        return base64.b64decode(text.encode("ascii"), validate=True)
    except (UnicodeEncodeError, binascii.Error) as e:
        raise MalformedMessageError(f"bad base64 value: {e}") from None
