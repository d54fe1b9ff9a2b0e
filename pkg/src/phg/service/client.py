"""Reporting client: turns local perceptual hashes into OPRF tokens via
the coordinator's relay and submits them, learning only how many
providers were contacted.

Raw hashes never leave the process; each provider sees only blinded
group elements, and the coordinator sees blinded elements and finished
tokens.  One blinding scalar per hash is drawn for the whole session
and reused across providers, so a single-provider report costs exactly
two exponentiations plus one inversion per reported hash.
"""

from __future__ import annotations

import logging
import socket

from ..phash import PerceptualHash
from ..psi.core import ClientSet, Token, blind, unblind_finalize
from ..psi.group import GroupOps
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

log = logging.getLogger("phg.service.client")


class ConnectionFailedError(Exception):
    """The coordinator could not be reached."""


class ProtocolError(Exception):
    """The coordinator answered with an error message."""

    def __init__(self, code, message):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


class ReportReceipt:
    """What the client learns from a report: counts, nothing else."""

    def __init__(self, providers_contacted: int, tokens_sent: int):
        self.providers_contacted = providers_contacted
        self.tokens_sent = tokens_sent

    def __repr__(self):
        return (
            f"ReportReceipt(providers_contacted={self.providers_contacted}, "
            f"tokens_sent={self.tokens_sent})"
        )


class _Session:
    def __init__(self, address, timeout):
        try:
            self.sock = socket.create_connection(address, timeout=timeout)
        except OSError as e:
            raise ConnectionFailedError(f"cannot reach {address[0]}:{address[1]}: {e}") from None
        self.stream = self.sock.makefile("rb")

    def send(self, m: WireMessage) -> None:
        self.sock.sendall(encode_message(m))

    def recv(self, expected: str) -> WireMessage:
        try:
            m = read_message(self.stream)
        except MalformedMessageError as e:
            raise ProtocolError(400, str(e)) from None
        if m is None:
            raise ConnectionFailedError("coordinator closed the connection")
        if m.type == "error":
            raise ProtocolError(m.get("code", 500), m.get("message", "unspecified"))
        if m.type != expected:
            raise ProtocolError(500, f"expected {expected}, got {m.type}")
        return m

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


def client_report(
    address: tuple[str, int],
    hashes,
    group: GroupOps,
    timeout: float = 60.0,
) -> ReportReceipt:
    """Blind, evaluate against every registered provider, and report.

    Returns a receipt; raises ConnectionFailedError or ProtocolError.
    An empty provider list still yields a receipt (nothing contacted).
    """
    x = ClientSet.create(group, hashes)
    session = _Session(address, timeout)
    try:
        return _run_report(session, x, group)
    finally:
        session.close()


def _run_report(session: _Session, x: ClientSet, group: GroupOps) -> ReportReceipt:
    session.send(
        WireMessage(
            "hello",
            {"role": "client", "proto": PROTO_VERSION, "algo": x.algorithm.prefix},
        )
    )
    ack = session.recv("hello_ack")
    sid = ack.require("session", str)
    providers = ack.require("providers", list)
    provider_ids = []
    for p in providers:
        if not isinstance(p, dict) or not isinstance(p.get("provider_id"), str):
            raise ProtocolError(500, "malformed provider list")
        provider_ids.append(p["provider_id"])

    blinded = [
        b64e(group.encode(blind(group, h, r))) for h, r in zip(x.hashes, x.scalars)
    ]

    token_map: dict[str, list[str]] = {}
    for pid in provider_ids:
        evaluated = _evaluate_against(session, sid, pid, blinded)
        tokens = [
            unblind_finalize(group, group.decode(b64d(v)), r, h)
            for v, r, h in zip(evaluated, x.scalars, x.hashes)
        ]
        token_map[pid] = [b64e(t.value) for t in tokens]

    session.send(WireMessage("report_tokens", {"session": sid, "tokens": token_map}))
    final = session.recv("report_ack")
    return ReportReceipt(
        providers_contacted=final.require("providers_contacted", int),
        tokens_sent=final.get("tokens_sent", len(x.hashes) if provider_ids else 0),
    )


def _evaluate_against(session, sid, pid, blinded: list[str]) -> list[str]:
    """Relay all blinded elements to one provider, chunked and ordered."""
    out: list[str] = []
    seq = 0
    for start in range(0, len(blinded), MAX_CHUNK_TOKENS):
        chunk = blinded[start : start + MAX_CHUNK_TOKENS]
        session.send(
            WireMessage(
                "blind_eval_req",
                {"session": sid, "provider_id": pid, "seq": seq, "elements": chunk},
            )
        )
        resp = session.recv("blind_eval_resp")
        if resp.get("provider_id") != pid or resp.get("seq") != seq:
            raise ProtocolError(500, "evaluation response out of order")
        elements = resp.require("elements", list)
        if len(elements) != len(chunk):
            raise ProtocolError(500, "evaluation response truncated")
        out.extend(elements)
        seq += 1
    return out


def tokens_for_report(
    x: ClientSet, group: GroupOps, evaluated_elements
) -> list[Token]:
    """Unblind a full evaluated-element list into tokens (helper for
    callers driving the wire protocol themselves)."""
    return [
        unblind_finalize(group, el, r, h)
        for el, r, h in zip(evaluated_elements, x.scalars, x.hashes)
    ]
