"""Line-delimited JSON wire format."""

import io
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phg.service.wire import (
    MAX_LINE,
    MESSAGE_TYPES,
    MalformedMessageError,
    OversizeMessageError,
    WireMessage,
    b64d,
    b64e,
    decode_message,
    encode_message,
    read_message,
)


def test_encode_is_compact_sorted_one_line():
    m = WireMessage("hello", {"role": "client", "algo": "pdq256", "proto": 1})
    line = encode_message(m)
    assert line == b'{"algo":"pdq256","proto":1,"role":"client","type":"hello"}\n'


def test_decode_roundtrip():
    m = WireMessage("index_ack", {"session": "s1", "count": 42})
    got = decode_message(encode_message(m).rstrip(b"\n"))
    assert got.type == "index_ack"
    assert got.fields == {"session": "s1", "count": 42}


def test_unknown_fields_are_preserved_not_rejected():
    raw = b'{"type":"hello_ack","session":"x","future_extension":[1,2]}'
    m = decode_message(raw)
    assert m.get("future_extension") == [1, 2]


def test_decode_rejects_malformed():
    for raw in [b"", b"not json", b"[1,2]", b'"str"', b'{"no_type":1}', b'{"type":7}']:
        with pytest.raises(MalformedMessageError):
            decode_message(raw)


def test_require_type_checks():
    m = decode_message(b'{"type":"x","n":3,"s":"v","l":[],"d":{}}')
    assert m.require("n", int) == 3
    assert m.require("s", str) == "v"
    assert m.require("l", list) == []
    with pytest.raises(MalformedMessageError):
        m.require("n", str)
    with pytest.raises(MalformedMessageError):
        m.require("missing", int)
    assert m.get("missing", "fallback") == "fallback"


def test_oversize_encode_refused():
    big = "x" * (MAX_LINE + 10)
    with pytest.raises(OversizeMessageError):
        encode_message(WireMessage("blob", {"data": big}))


def test_read_message_stream():
    buf = io.BytesIO(
        encode_message(WireMessage("a", {})) + encode_message(WireMessage("b", {"k": 1}))
    )
    assert read_message(buf).type == "a"
    m = read_message(buf)
    assert m.type == "b" and m.get("k") == 1
    assert read_message(buf) is None  # EOF


def test_read_message_oversize_line():
    line = b'{"type":"x","p":"' + b"y" * MAX_LINE + b'"}\n'
    with pytest.raises(OversizeMessageError):
        read_message(io.BytesIO(line))


def test_read_message_unterminated_garbage():
    with pytest.raises(MalformedMessageError):
        read_message(io.BytesIO(b"{bad"))


def test_message_types_cover_protocol():
    assert {
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
    } <= MESSAGE_TYPES


def test_b64_roundtrip_and_validation():
    data = bytes(range(40))
    assert b64d(b64e(data)) == data
    with pytest.raises(MalformedMessageError):
        b64d("not base64!!")
    with pytest.raises(MalformedMessageError):
        b64d(1234)


@settings(max_examples=40, deadline=None)
@given(
    fields=st.dictionaries(
        st.text(min_size=1, max_size=8).filter(lambda s: s != "type"),
        st.one_of(st.integers(), st.text(max_size=20), st.booleans()),
        max_size=5,
    )
)
def test_encode_decode_property(fields):
    m = WireMessage("probe", fields)
    got = decode_message(encode_message(m).rstrip(b"\n"))
    assert got.type == "probe" and got.fields == fields


def test_encoded_form_is_valid_json_line():
    m = WireMessage("hello", {"x": "é\n\ttab"})
    line = encode_message(m)
    assert line.count(b"\n") == 1 and line.endswith(b"\n")
    doc = json.loads(line)
    assert doc["x"] == "é\n\ttab"
