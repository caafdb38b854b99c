import random

import pytest
from hypothesis import given, settings, strategies as st

from wasmbench import cbor
from wasmbench.frames import (
    FrameError,
    InvokeFrame,
    PayloadDigestMismatch,
    PhaseBreakdown,
    ResourceSample,
    ResultFrame,
    decode_invoke,
    decode_result,
    encode_invoke,
    encode_result,
    join_multipart,
    split_multipart,
    step_number,
    validate_step_id,
)

_STEP_IDS = ["S1", "S2", "S3[0]", "S3[1]", "S3[2]", "S3[3]", "S4", "S5"]


def test_step_id_validation():
    for sid in _STEP_IDS:
        validate_step_id(sid)
    for bad in ["S0", "S6", "S3[4]", "S3[]", "s1", "", "S3[0"]:
        with pytest.raises(FrameError):
            validate_step_id(bad)


def test_step_number_collapses_branches():
    assert step_number("S3[2]") == 3
    assert step_number("S5") == 5


def test_invoke_roundtrip():
    frame = InvokeFrame("S1", "r1", b"\x01\x02\x03")
    assert decode_invoke(encode_invoke(frame)) == frame


def test_invoke_extras_roundtrip():
    frame = InvokeFrame("S4", "r9", b"", extras={"mode": "aot", "state": "cold"})
    assert decode_invoke(encode_invoke(frame)) == frame


def test_invoke_requires_nonempty_run_id():
    with pytest.raises(FrameError):
        InvokeFrame("S1", "", b"")


def test_result_roundtrip_error_preserved():
    frame = ResultFrame.fail("StepTrap", "boom")
    decoded = decode_result(encode_result(frame))
    assert decoded.status == "error"
    assert decoded.error == {"code": "StepTrap", "msg": "boom"}


def test_result_invariants():
    with pytest.raises(FrameError):
        ResultFrame(status="error")  # error without detail
    with pytest.raises(FrameError):
        ResultFrame(status="ok")  # ok without payload
    with pytest.raises(FrameError):
        ResultFrame(status="maybe", payload=b"")


def test_result_full_roundtrip():
    frame = ResultFrame.ok(
        payload=b"xyz",
        phase_breakdown=PhaseBreakdown(load=1, compile=2, instantiate=3, init=4, execute=5),
        total_us=20,
        resource_samples=[ResourceSample(t=1, cpu_pct=50.0, rss_bytes=4096)],
    )
    decoded = decode_result(encode_result(frame))
    assert decoded == frame
    assert decoded.phase_breakdown.total() == 15


def test_unknown_keys_ignored_on_decode():
    obj = cbor.decode(encode_invoke(InvokeFrame("S1", "r", b"p")))
    obj["some_future_key"] = {"nested": [1, 2, 3]}
    decoded = decode_invoke(cbor.encode(obj))
    assert decoded.step_id == "S1" and decoded.payload == b"p"


def test_envelope_overhead_small_for_4mib_payload():
    payload = random.Random(0).randbytes(4 * 1024 * 1024)
    encoded = encode_invoke(InvokeFrame("S1", "run-1", payload))
    assert len(encoded) - len(payload) < 1024
    assert decode_invoke(encoded).payload == payload


def test_multipart_below_threshold_inline():
    frame = InvokeFrame("S1", "r1", b"\x00" * 1000)
    meta, part = split_multipart(frame, threshold=64 * 1024)
    assert part is None
    assert join_multipart(meta, None) == frame


def test_multipart_split_and_join():
    payload = random.Random(1).randbytes(1024 * 1024)
    frame = InvokeFrame("S2", "r2", payload, extras={"state": "warm"})
    meta, part = split_multipart(frame, threshold=64 * 1024)
    assert part == payload
    assert b"payload_ref" in meta and len(meta) < 1024  # payload elided, not base64'd
    assert join_multipart(meta, part) == frame


def test_multipart_tampered_payload_rejected():
    payload = bytearray(random.Random(2).randbytes(128 * 1024))
    meta, part = split_multipart(InvokeFrame("S1", "r", bytes(payload)), threshold=1024)
    tampered = bytearray(part)
    tampered[500] ^= 0xFF
    with pytest.raises(PayloadDigestMismatch):
        join_multipart(meta, bytes(tampered))


def test_multipart_wrong_length_rejected():
    meta, part = split_multipart(InvokeFrame("S1", "r", b"\x00" * 2048), threshold=1024)
    with pytest.raises(PayloadDigestMismatch):
        join_multipart(meta, part + b"\x00")


def test_multipart_threshold_must_be_positive():
    with pytest.raises(ValueError):
        split_multipart(InvokeFrame("S1", "r", b""), threshold=0)


@settings(max_examples=200, deadline=None)
@given(
    step=st.sampled_from(_STEP_IDS),
    run_id=st.text(min_size=1, max_size=40),
    payload=st.binary(max_size=8192),
    threshold=st.integers(min_value=1, max_value=16384),
)
def test_multipart_roundtrip_property(step, run_id, payload, threshold):
    frame = InvokeFrame(step, run_id, payload)
    meta, part = split_multipart(frame, threshold)
    assert (part is not None) == (len(payload) >= threshold)
    assert join_multipart(meta, part) == frame
