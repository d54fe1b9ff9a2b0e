"""Provider-side agent: registers with a coordinator, uploads a token
index, answers blinded OPRF evaluations, and logs match notifications.

The agent holds the provider's OPRF key; the coordinator never sees it.
Match notifications arrive as tokens, which the agent maps back to hash
texts through a lookup table built alongside the index.
"""

from __future__ import annotations

import logging
import socket
import threading
from datetime import datetime, timezone

from ..psi.core import OprfKey, TokenIndex
from ..psi.group import GroupOps, InvalidElementError
from .coordinator import PROTO_VERSION
from .wire import (
    MAX_CHUNK_TOKENS,
    MalformedMessageError,
    WireMessage,
    b64d,
    b64e,
    encode_message,
    read_message,
)

log = logging.getLogger("phg.service.provider")


class ProviderError(Exception):
    """Registration or serving failed."""


class ProviderAgent:
    """One provider connection; use connect() then serve()."""

    def __init__(
        self,
        address: tuple[str, int],
        provider_id: str,
        group: GroupOps,
        key: OprfKey,
        index: TokenIndex,
        hash_lookup: dict[bytes, str] | None = None,
        log_path=None,
        timeout: float = 30.0,
    ):
        if index.key_id != key.key_id:
            raise ProviderError("index was built under a different key id")
        self.address = address
        self.provider_id = provider_id
        self.group = group
        self.key = key
        self.index = index
        self.hash_lookup = dict(hash_lookup or {})
        self.log_path = log_path
        self.timeout = timeout
        self.session: str | None = None
        self.matches: list[str] = []
        self._sock: socket.socket | None = None
        self._stream = None
        self._wlock = threading.Lock()
        self._stopped = False

    # -- lifecycle

    def connect(self) -> None:
        """Dial, register, and upload the index; raises on rejection."""
        self._sock = socket.create_connection(self.address, timeout=self.timeout)
        self._stream = self._sock.makefile("rb")
        self._send(
            WireMessage(
                "hello",
                {
                    "role": "provider",
                    "proto": PROTO_VERSION,
                    "algo": self.index.algorithm.prefix,
                    "provider_id": self.provider_id,
                    "key_id": self.key.key_id.hex(),
                },
            )
        )
        ack = self._expect("hello_ack")
        self.session = ack.require("session", str)
        self._upload_index()

    def _upload_index(self) -> None:
        tokens = self.index.tokens
        total = len(tokens)
        sent = 0
        while True:
            chunk = tokens[sent : sent + MAX_CHUNK_TOKENS]
            sent += len(chunk)
            last = sent >= total
            self._send(
                WireMessage(
                    "index_put",
                    {
                        "session": self.session,
                        "tokens": [b64e(t) for t in chunk],
                        "last": last,
                    },
                )
            )
            if last:
                break
        ack = self._expect("index_ack")
        count = ack.require("count", int)
        if count != total:
            raise ProviderError(f"coordinator acked {count} tokens, uploaded {total}")
        log.info("provider %s: %d tokens registered", self.provider_id, total)

    def serve(self) -> None:
        """Answer evaluation requests and match notifications until the
        connection closes or stop() is called."""
        self._sock.settimeout(None)
        while True:
            try:
                m = read_message(self._stream)
            except (OSError, ValueError, MalformedMessageError):
                break
            if m is None:
                break
            if m.type == "blind_eval_req":
                self._handle_eval(m)
            elif m.type == "match_notify":
                self._handle_notify(m)
            elif m.type == "error":
                log.warning(
                    "coordinator error %s: %s", m.get("code"), m.get("message")
                )
                break
            else:
                log.warning("ignoring unexpected %s", m.type)
        if not self._stopped:
            raise ProviderError("connection to coordinator lost")

    def run(self) -> None:
        self.connect()
        self.serve()

    def stop(self) -> None:
        self._stopped = True
        if self._sock is not None:
            try:
                self._sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                self._sock.close()
            except OSError:
                pass

    # -- message handling

    def _handle_eval(self, m: WireMessage) -> None:
        relay = m.get("relay")
        try:
            elements = m.require("elements", list)
            evaluated = []
            for v in elements:
                el = self.group.decode(b64d(v))
                evaluated.append(b64e(self.group.encode(self.group.exp(el, self.key.scalar))))
        except (MalformedMessageError, InvalidElementError) as e:
            self._send(
                WireMessage(
                    "blind_eval_resp",
                    {"session": self.session, "relay": relay, "error": str(e)},
                )
            )
            return
        self._send(
            WireMessage(
                "blind_eval_resp",
                {"session": self.session, "relay": relay, "elements": evaluated},
            )
        )

    def _handle_notify(self, m: WireMessage) -> None:
        try:
            values = m.require("tokens", list)
        except MalformedMessageError:
            return
        stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
        lines = []
        for v in values:
            try:
                raw = b64d(v)
            except MalformedMessageError:
                continue
            text = self.hash_lookup.get(raw, "token:" + raw.hex())
            self.matches.append(text)
            lines.append(f"{text}\t{stamp}\n")
        if lines:
            log.info("%d match(es) reported to provider %s", len(lines), self.provider_id)
            if self.log_path is not None:
                with open(self.log_path, "a") as f:
                    f.writelines(lines)
                    f.flush()

    # -- plumbing

    def _send(self, m: WireMessage) -> None:
        with self._wlock:
            self._sock.sendall(encode_message(m))

    def _expect(self, mtype: str) -> WireMessage:
        m = read_message(self._stream)
        if m is None:
            raise ProviderError("coordinator closed the connection")
        if m.type == "error":
            raise ProviderError(
                f"coordinator rejected us: {m.get('code')} {m.get('message')}"
            )
        if m.type != mtype:
            raise ProviderError(f"expected {mtype}, got {m.type}")
        return m
