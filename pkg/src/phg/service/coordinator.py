"""The matching service: accepts providers and clients, relays OPRF
evaluations, matches reported tokens, and notifies providers.

The coordinator never performs group operations and never sees raw
perceptual hashes: providers upload token indexes built under their own
keys, clients send blinded elements and finished tokens.  Uploaded
indexes are persisted as `<data_dir>/<provider_id>.phix` and reloaded on
startup, so a restart preserves matching behavior byte for byte.
"""

from __future__ import annotations

import logging
import os
import re
import secrets
import socket
import threading
from pathlib import Path
from queue import Empty, Queue

from ..phash import HashAlgorithm
from ..psi.core import IndexFormatError, Token, TokenIndex, intersect
from .wire import (
    MAX_CHUNK_TOKENS,
    MalformedMessageError,
    OversizeMessageError,
    WireMessage,
    b64d,
    b64e,
    encode_message,
    read_message,
)

log = logging.getLogger("phg.service.coordinator")

PROTO_VERSION = 1

_PROVIDER_ID_RE = re.compile(r"^[A-Za-z0-9_.-]{1,64}$")
_ALGORITHMS = {a.prefix: a for a in HashAlgorithm}


class _Connection:
    """One accepted socket with a write lock and a buffered reader."""

    def __init__(self, sock: socket.socket):
        self.sock = sock
        self.stream = sock.makefile("rb")
        self._wlock = threading.Lock()
        self._closed = False

    def send(self, m: WireMessage) -> None:
        data = encode_message(m)
        with self._wlock:
            self.sock.sendall(data)

    def send_error(self, session: str | None, code: int, message: str) -> None:
        fields = {"code": code, "message": message}
        if session is not None:
            fields["session"] = session
        try:
            self.send(WireMessage("error", fields))
        except OSError:
            pass

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        try:
            self.sock.close()
        except OSError:
            pass


class _ProviderSession:
    """Live connection state for one registered provider."""

    def __init__(self, conn: _Connection, session_id: str):
        self.conn = conn
        self.session_id = session_id
        self.pending: dict[str, Queue] = {}
        self.plock = threading.Lock()
        self.staging: list[bytes] | None = None

    def register_relay(self, relay_id: str) -> Queue:
        q: Queue = Queue(maxsize=1)
        with self.plock:
            self.pending[relay_id] = q
        return q

    def resolve_relay(self, relay_id: str, msg: WireMessage) -> None:
        with self.plock:
            q = self.pending.pop(relay_id, None)
        if q is not None:
            q.put(msg)

    def drop_all_relays(self) -> None:
        with self.plock:
            pending, self.pending = self.pending, {}
        for q in pending.values():
            q.put(WireMessage("error", {"code": 500, "message": "provider disconnected"}))


class _ProviderEntry:
    """A provider known to the coordinator (live or persisted)."""

    def __init__(self, provider_id: str):
        self.provider_id = provider_id
        self.algorithm: HashAlgorithm | None = None
        self.key_id_hex: str | None = None
        self.index: TokenIndex | None = None
        self.session: _ProviderSession | None = None


class Coordinator:
    """Threaded TCP coordinator; one thread per connection."""

    def __init__(
        self,
        host: str = "127.0.0.1",
        port: int = 0,
        data_dir=None,
        eval_timeout: float = 30.0,
    ):
        self.host = host
        self.port = port
        self.data_dir = Path(data_dir) if data_dir is not None else None
        self.eval_timeout = eval_timeout
        self._lock = threading.Lock()
        self._providers: dict[str, _ProviderEntry] = {}
        self._listener: socket.socket | None = None
        self._conns: set[_Connection] = set()
        self._stopping = False
        self._accept_thread: threading.Thread | None = None

    # -- lifecycle

    def start(self) -> None:
        """Load persisted indexes, bind, and serve in background threads."""
        if self.data_dir is not None:
            self.data_dir.mkdir(parents=True, exist_ok=True)
            self._load_persisted()
        lst = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        lst.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        lst.bind((self.host, self.port))
        lst.listen(64)
        self._listener = lst
        self.port = lst.getsockname()[1]
        self._accept_thread = threading.Thread(
            target=self._accept_loop, name="coordinator-accept", daemon=True
        )
        self._accept_thread.start()
        log.info("coordinator listening on %s:%d", self.host, self.port)

    @property
    def address(self) -> tuple[str, int]:
        return (self.host, self.port)

    def shutdown(self) -> None:
        self._stopping = True
        if self._listener is not None:
            # close() alone does not wake a blocked accept() on Linux
            try:
                self._listener.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                self._listener.close()
            except OSError:
                pass
        with self._lock:
            conns = list(self._conns)
        for c in conns:
            c.close()
        if self._accept_thread is not None:
            self._accept_thread.join(timeout=5)

    def wait(self) -> None:
        """Block until shutdown() is called from elsewhere."""
        if self._accept_thread is not None:
            self._accept_thread.join()

    def _load_persisted(self) -> None:
        for path in sorted(self.data_dir.glob("*.phix")):
            try:
                index = TokenIndex.from_bytes(path.read_bytes())
            except (OSError, IndexFormatError) as e:
                log.warning("skipping %s: %s", path, e)
                continue
            entry = _ProviderEntry(path.stem)
            entry.algorithm = index.algorithm
            entry.key_id_hex = index.key_id.hex()
            entry.index = index
            with self._lock:
                self._providers[path.stem] = entry
            log.info("loaded %d tokens for provider %s", len(index), path.stem)

    def _persist(self, provider_id: str, index: TokenIndex) -> None:
        if self.data_dir is None:
            return
        path = self.data_dir / f"{provider_id}.phix"
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_bytes(index.to_bytes())
        os.replace(tmp, path)

    # -- connection handling

    def _accept_loop(self) -> None:
        while not self._stopping:
            try:
                sock, peer = self._listener.accept()
            except OSError:
                break
            conn = _Connection(sock)
            with self._lock:
                self._conns.add(conn)
            threading.Thread(
                target=self._serve_connection,
                args=(conn, peer),
                name=f"coordinator-conn-{peer[1]}",
                daemon=True,
            ).start()

    def _serve_connection(self, conn: _Connection, peer) -> None:
        try:
            try:
                m = read_message(conn.stream)
            except OversizeMessageError:
                conn.send_error(None, 413, "line too long")
                return
            except MalformedMessageError as e:
                conn.send_error(None, 400, str(e))
                return
            if m is None:
                return
            if m.type != "hello":
                conn.send_error(None, 409, "expected hello")
                return
            try:
                role = m.require("role", str)
                proto = m.require("proto", int)
                algo_name = m.require("algo", str)
            except MalformedMessageError as e:
                conn.send_error(None, 400, str(e))
                return
            if proto != PROTO_VERSION:
                conn.send_error(None, 400, f"unsupported proto {proto}")
                return
            algorithm = _ALGORITHMS.get(algo_name)
            if algorithm is None:
                conn.send_error(None, 400, f"unknown algo {algo_name!r}")
                return
            if role == "client":
                self._serve_client(conn, algorithm)
            elif role == "provider":
                self._serve_provider(conn, m, algorithm)
            else:
                conn.send_error(None, 400, f"unknown role {role!r}")
        except OSError:
            pass
        except Exception:
            log.exception("connection handler failed for %s", peer)
            conn.send_error(None, 500, "internal error")
        finally:
            conn.close()
            with self._lock:
                self._conns.discard(conn)

    # -- client sessions

    def _serve_client(self, conn: _Connection, algorithm: HashAlgorithm) -> None:
        session = "c" + secrets.token_hex(8)
        # snapshot: a session works against one index version end to end
        with self._lock:
            snapshot = {
                pid: (e.index, e.session)
                for pid, e in self._providers.items()
                if e.index is not None
                and e.algorithm is algorithm
                and e.session is not None
            }
        providers_field = [
            {"provider_id": pid, "key_id": self._providers[pid].key_id_hex}
            for pid in sorted(snapshot)
        ]
        conn.send(
            WireMessage("hello_ack", {"session": session, "providers": providers_field})
        )
        reported = False
        while True:
            m = self._next_or_close(conn, session)
            if m is None:
                return
            if m.type == "blind_eval_req":
                if reported:
                    conn.send_error(session, 409, "session already reported")
                    return
                self._relay_eval(conn, session, snapshot, m)
            elif m.type == "report_tokens":
                if reported:
                    conn.send_error(session, 409, "session already reported")
                    return
                if self._handle_report(conn, session, snapshot, m):
                    reported = True
            elif m.type == "hello":
                conn.send_error(session, 409, "hello repeated")
                return
            elif m.type in ("index_put", "blind_eval_resp"):
                conn.send_error(session, 409, f"{m.type} not valid for a client session")
                return
            else:
                conn.send_error(session, 400, f"unknown type {m.type!r}")

    def _relay_eval(self, conn, session, snapshot, m) -> None:
        try:
            pid = m.require("provider_id", str)
            elements = m.require("elements", list)
        except MalformedMessageError as e:
            conn.send_error(session, 400, str(e))
            return
        seq = m.get("seq", 0)
        if pid not in snapshot:
            conn.send_error(session, 404, f"no such provider {pid!r}")
            return
        if len(elements) > MAX_CHUNK_TOKENS:
            conn.send_error(session, 413, "too many elements in one request")
            return
        psession = snapshot[pid][1]
        relay_id = secrets.token_hex(8)
        q = psession.register_relay(relay_id)
        try:
            psession.conn.send(
                WireMessage(
                    "blind_eval_req",
                    {
                        "session": psession.session_id,
                        "relay": relay_id,
                        "elements": elements,
                    },
                )
            )
        except OSError:
            psession.resolve_relay(relay_id, WireMessage("error", {}))  # unregister
            conn.send_error(session, 500, f"provider {pid!r} unreachable")
            return
        try:
            resp = q.get(timeout=self.eval_timeout)
        except Empty:
            psession.resolve_relay(relay_id, WireMessage("error", {}))
            conn.send_error(session, 500, f"provider {pid!r} timed out")
            return
        if resp.type != "blind_eval_resp" or resp.get("error"):
            detail = resp.get("error") or resp.get("message") or "evaluation failed"
            conn.send_error(session, 500, f"provider {pid!r}: {detail}")
            return
        conn.send(
            WireMessage(
                "blind_eval_resp",
                {
                    "session": session,
                    "provider_id": pid,
                    "seq": seq,
                    "elements": resp.get("elements", []),
                },
            )
        )

    def _handle_report(self, conn, session, snapshot, m) -> bool:
        """Match tokens against snapshot indexes; returns True when acked."""
        try:
            token_map = m.require("tokens", dict)
        except MalformedMessageError as e:
            conn.send_error(session, 400, str(e))
            return False
        decoded: dict[str, list[Token]] = {}
        total = 0
        for pid, values in token_map.items():
            if pid not in snapshot:
                conn.send_error(session, 404, f"no such provider {pid!r}")
                return False
            if not isinstance(values, list):
                conn.send_error(session, 400, "token lists must be arrays")
                return False
            try:
                toks = [Token(b64d(v)) for v in values]
            except (MalformedMessageError, ValueError) as e:
                conn.send_error(session, 400, f"bad token for {pid!r}: {e}")
                return False
            decoded[pid] = toks
            total = max(total, len(toks))

        for pid, toks in decoded.items():
            index = snapshot[pid][0]
            hits = intersect(toks, index)
            if not hits:
                continue
            with self._lock:
                entry = self._providers.get(pid)
                live = entry.session if entry is not None else None
            if live is None:
                log.warning("provider %s offline, %d matches dropped", pid, len(hits))
                continue
            try:
                live.conn.send(
                    WireMessage(
                        "match_notify",
                        {
                            "session": live.session_id,
                            "tokens": [b64e(t.value) for t in hits],
                        },
                    )
                )
            except OSError:
                log.warning("notify to provider %s failed", pid)

        conn.send(
            WireMessage(
                "report_ack",
                {
                    "session": session,
                    "providers_contacted": len(decoded),
                    "tokens_sent": total,
                },
            )
        )
        return True

    # -- provider sessions

    def _serve_provider(self, conn, hello: WireMessage, algorithm: HashAlgorithm) -> None:
        try:
            pid = hello.require("provider_id", str)
            key_id_hex = hello.require("key_id", str)
        except MalformedMessageError as e:
            conn.send_error(None, 400, str(e))
            return
        if not _PROVIDER_ID_RE.fullmatch(pid):
            conn.send_error(None, 400, "invalid provider_id")
            return
        try:
            key_id = bytes.fromhex(key_id_hex)
        except ValueError:
            key_id = b""
        if len(key_id) != 8:
            conn.send_error(None, 400, "key_id must be 16 hex chars")
            return

        session = "p" + secrets.token_hex(8)
        psession = _ProviderSession(conn, session)
        with self._lock:
            entry = self._providers.get(pid)
            if entry is None:
                entry = _ProviderEntry(pid)
                self._providers[pid] = entry
            old = entry.session
            entry.session = psession
            entry.key_id_hex = key_id_hex
            if entry.algorithm is not algorithm:
                entry.algorithm = algorithm
                entry.index = None  # persisted index was for another algorithm
        if old is not None:
            log.info("provider %s reconnected; closing previous session", pid)
            old.drop_all_relays()
            old.conn.close()

        conn.send(WireMessage("hello_ack", {"session": session}))
        try:
            while True:
                m = self._next_or_close(conn, session)
                if m is None:
                    return
                if m.type == "index_put":
                    self._handle_index_put(conn, session, entry, psession, m, key_id)
                elif m.type == "blind_eval_resp":
                    relay = m.get("relay")
                    if isinstance(relay, str):
                        psession.resolve_relay(relay, m)
                elif m.type == "hello":
                    conn.send_error(session, 409, "hello repeated")
                    return
                elif m.type in ("blind_eval_req", "report_tokens"):
                    conn.send_error(session, 409, f"{m.type} not valid for a provider session")
                    return
                else:
                    conn.send_error(session, 400, f"unknown type {m.type!r}")
        finally:
            psession.drop_all_relays()
            with self._lock:
                if entry.session is psession:
                    entry.session = None

    def _handle_index_put(self, conn, session, entry, psession, m, key_id: bytes) -> None:
        try:
            values = m.require("tokens", list)
            last = m.require("last", bool)
        except MalformedMessageError as e:
            conn.send_error(session, 400, str(e))
            psession.staging = None
            return
        if len(values) > MAX_CHUNK_TOKENS:
            conn.send_error(session, 413, "chunk exceeds token limit")
            psession.staging = None
            return
        if psession.staging is None:
            psession.staging = []
        try:
            for v in values:
                t = b64d(v)
                if len(t) != 32:
                    raise MalformedMessageError("tokens must be 32 octets")
                psession.staging.append(t)
        except MalformedMessageError as e:
            conn.send_error(session, 400, str(e))
            psession.staging = None
            return
        if not last:
            return
        tokens = tuple(sorted(set(psession.staging)))
        psession.staging = None
        index = TokenIndex(algorithm=entry.algorithm, key_id=key_id, tokens=tokens)
        try:
            self._persist(entry.provider_id, index)
        except OSError as e:
            log.error("persist failed for %s: %s", entry.provider_id, e)
            conn.send_error(session, 500, "index persistence failed")
            return
        with self._lock:
            entry.index = index  # atomic swap: sessions hold snapshots
        log.info("provider %s: index of %d tokens active", entry.provider_id, len(index))
        conn.send(WireMessage("index_ack", {"session": session, "count": len(index)}))

    # -- shared

    def _next_or_close(self, conn: _Connection, session: str) -> WireMessage | None:
        try:
            m = read_message(conn.stream)
        except OversizeMessageError:
            conn.send_error(session, 413, "line too long")
            return None
        except MalformedMessageError as e:
            conn.send_error(session, 400, str(e))
            return None
        except OSError:
            return None
        return m
