"""Step kernel semantics against independent oracles (native build)."""

import zlib

import numpy as np
import pytest

from wasmbench import cbor, steps
from wasmbench.payloads import LARGE, MEDIUM, SMALL, PayloadSpec, generate
from wasmbench.steps import StepFailure, d_of, strip_bounds


@pytest.mark.parametrize("sc, expected", [(SMALL, 64), (MEDIUM, 512), (LARGE, 1024)])
def test_d_of(sc, expected):
    assert d_of(sc) == expected


def test_strip_bounds_cover_rows_exactly():
    for d in (4, 64, 512, 1024):
        spans = [strip_bounds(d, k) for k in range(4)]
        assert spans[0][0] == 0 and spans[-1][1] == d
        for (_, hi), (lo, _) in zip(spans, spans[1:]):
            assert hi == lo


# ---------------------------------------------------------------------------
# S1: ingest + CRC
# ---------------------------------------------------------------------------


def test_s1_crc_empty_payload(oracle):
    out = steps.parse_result(oracle.run_step(1, steps.make_data_frame(b"")))
    assert out["crc"] == 0x00000000


def test_s1_crc_check_value(oracle):
    out = steps.parse_result(oracle.run_step(1, steps.make_data_frame(b"123456789")))
    assert out["crc"] == 0xCBF43926  # standard check value for this variant
    assert out["payload"] == b"123456789"
    assert out["kind"] == "u8"


def test_s1_crc_matches_zlib(oracle):
    data = generate(PayloadSpec(42, SMALL))
    out = steps.parse_result(oracle.run_step(1, steps.make_data_frame(data)))
    assert out["crc"] == zlib.crc32(data)


def test_s1_truncated_cbor_is_malformed(oracle):
    good = steps.make_data_frame(b"abcdef")
    with pytest.raises(StepFailure) as exc:
        steps.parse_result(oracle.run_step(1, good[: len(good) // 2]))
    assert exc.value.code == "MalformedFrame"


def test_s1_declared_crc_mismatch(oracle):
    frame = steps.make_data_frame(b"123456789", crc=0xDEADBEEF)
    with pytest.raises(StepFailure) as exc:
        steps.parse_result(oracle.run_step(1, frame))
    assert exc.value.code == "ChecksumMismatch"


def test_s1_declared_crc_match_ok(oracle):
    frame = steps.make_data_frame(b"123456789", crc=0xCBF43926)
    out = steps.parse_result(oracle.run_step(1, frame))
    assert out["crc"] == 0xCBF43926


def test_s1_wrong_kind_rejected(oracle):
    frame = steps.make_data_frame(b"\x00" * 8, kind="f32")
    with pytest.raises(StepFailure) as exc:
        steps.parse_result(oracle.run_step(1, frame))
    assert exc.value.code == "MalformedFrame"


# ---------------------------------------------------------------------------
# S2: window-normalize
# ---------------------------------------------------------------------------


def s2_reference(data: bytes) -> np.ndarray:
    """Independent float32 implementation of the preprocessing step."""
    b = np.frombuffer(data, dtype=np.uint8).astype(np.uint32)
    g = (b.reshape(-1, 4).sum(axis=1, dtype=np.uint32)).astype(np.float32) / np.float32(4.0)
    n = len(g)
    pad = np.concatenate([np.zeros(15, np.float32), g])
    acc = np.zeros(n, np.float32)
    for t in range(16):  # ascending index order inside the window
        acc = acc + pad[t : t + n]
    count = np.minimum(np.arange(n) + 1, 16).astype(np.float32)
    v = (g - acc / count) / np.float32(255.0)
    return np.clip(v, np.float32(-1.0), np.float32(1.0))


def test_s2_all_zero_input(oracle):
    frame = steps.make_data_frame(b"\x00" * 16384)
    out = steps.parse_result(oracle.run_step(2, frame))
    values = np.frombuffer(out["payload"], dtype="<f4")
    assert out["kind"] == "f32"
    assert len(out["payload"]) == 16384  # same byte length
    assert np.all(values == values[0])
    assert -1.0 <= values[0] <= 1.0


def test_s2_matches_reference_bitwise(oracle):
    data = generate(PayloadSpec(42, SMALL))
    out = steps.parse_result(oracle.run_step(2, steps.make_data_frame(data)))
    assert out["payload"] == s2_reference(data).tobytes()


def test_s2_output_in_range_and_same_size(oracle):
    for seed in (1, 2, 3):
        data = generate(PayloadSpec(seed, SMALL))
        out = steps.parse_result(oracle.run_step(2, steps.make_data_frame(data)))
        values = np.frombuffer(out["payload"], dtype="<f4")
        assert len(out["payload"]) == len(data)
        assert np.all(values >= -1.0) and np.all(values <= 1.0)


def test_s2_length_not_divisible(oracle):
    with pytest.raises(StepFailure) as exc:
        steps.parse_result(oracle.run_step(2, steps.make_data_frame(b"\x00" * 17)))
    assert exc.value.code == "LengthNotDivisible"


# ---------------------------------------------------------------------------
# S3: strip matmul
# ---------------------------------------------------------------------------


def naive_matmul_f32(a: np.ndarray) -> np.ndarray:
    """O(d^3) reference with ascending-k accumulation in float32."""
    d = a.shape[0]
    c = np.zeros((d, d), dtype=np.float32)
    for k in range(d):
        c += np.outer(a[:, k], a[k, :]).astype(np.float32)
    return c


def run_fanout(oracle, a: np.ndarray) -> np.ndarray:
    d = a.shape[0]
    strips = []
    for branch in range(4):
        lo, hi = strip_bounds(d, branch)
        frame = steps.make_block_frame(a.tobytes(), d, lo, hi)
        out = steps.parse_result(oracle.run_step(3, frame))
        assert (out["rows_from"], out["rows_to"], out["d"]) == (lo, hi, d)
        strips.append(np.frombuffer(out["payload"], dtype="<f4").reshape(hi - lo, d))
    return np.vstack(strips)


def test_s3_identity(oracle):
    eye = np.eye(64, dtype=np.float32)
    frame = steps.make_block_frame(eye.tobytes(), 64, 0, 16)
    out = steps.parse_result(oracle.run_step(3, frame))
    got = np.frombuffer(out["payload"], dtype="<f4").reshape(16, 64)
    assert np.array_equal(got, eye[:16])


def test_s3_all_ones_toy():
    ones = np.ones((4, 4), dtype=np.float32)
    assert np.all(naive_matmul_f32(ones) == 4.0)


def test_s3_all_ones_through_kernel(oracle):
    ones = np.ones((4, 4), dtype=np.float32)
    frame = steps.make_block_frame(ones.tobytes(), 4, 0, 1)
    out = steps.parse_result(oracle.run_step(3, frame))
    assert np.all(np.frombuffer(out["payload"], dtype="<f4") == 4.0)


@pytest.mark.parametrize("d", [4, 8, 64])
def test_s3_fanout_matches_naive_oracle(oracle, d):
    rng = np.random.default_rng(d)
    a = rng.standard_normal((d, d), dtype=np.float32)
    assert run_fanout(oracle, a).tobytes() == naive_matmul_f32(a).tobytes()


def test_s3_dimension_mismatch(oracle):
    frame = steps.make_block_frame(b"\x00" * 64, 8, 0, 2)  # 8x8 needs 256 bytes
    with pytest.raises(StepFailure) as exc:
        steps.parse_result(oracle.run_step(3, frame))
    assert exc.value.code == "DimensionMismatch"


def test_s3_bad_strip_bounds(oracle):
    a = np.zeros((4, 4), dtype=np.float32)
    with pytest.raises(StepFailure) as exc:
        steps.parse_result(oracle.run_step(3, steps.make_block_frame(a.tobytes(), 4, 3, 3)))
    assert exc.value.code == "DimensionMismatch"


# ---------------------------------------------------------------------------
# S4: fan-in + digest
# ---------------------------------------------------------------------------


def _strip_frames(oracle, a: np.ndarray) -> list[bytes]:
    d = a.shape[0]
    frames = []
    for branch in range(4):
        lo, hi = strip_bounds(d, branch)
        reply = oracle.run_step(3, steps.make_block_frame(a.tobytes(), d, lo, hi))
        steps.parse_result(reply)
        frames.append(reply[1:])
    return frames


def test_s4_identity_digest_matches_reference(oracle, host_engine):
    eye = np.eye(64, dtype=np.float32)
    out = steps.parse_result(oracle.run_step(4, steps.make_fanin_frame(_strip_frames(oracle, eye))))
    assert out["payload"] == eye.tobytes()  # I x I == I
    assert out["digest"] == host_engine.blake3_reference(eye.tobytes())


def test_s4_arrival_order_irrelevant(oracle):
    rng = np.random.default_rng(11)
    a = rng.standard_normal((8, 8), dtype=np.float32)
    frames = _strip_frames(oracle, a)
    sorted_out = steps.parse_result(oracle.run_step(4, steps.make_fanin_frame(frames)))
    shuffled = [frames[2], frames[0], frames[3], frames[1]]
    shuffled_out = steps.parse_result(oracle.run_step(4, steps.make_fanin_frame(shuffled)))
    assert sorted_out["payload"] == shuffled_out["payload"]
    assert sorted_out["digest"] == shuffled_out["digest"]


def test_s4_three_blocks_incomplete(oracle):
    rng = np.random.default_rng(12)
    a = rng.standard_normal((8, 8), dtype=np.float32)
    frames = _strip_frames(oracle, a)[:3]
    with pytest.raises(StepFailure) as exc:
        steps.parse_result(oracle.run_step(4, steps.make_fanin_frame(frames)))
    assert exc.value.code == "IncompleteFanIn"


def test_s4_overlapping_blocks_incomplete(oracle):
    rng = np.random.default_rng(13)
    a = rng.standard_normal((8, 8), dtype=np.float32)
    frames = _strip_frames(oracle, a)
    frames[1] = frames[0]  # duplicate strip -> overlap + gap
    with pytest.raises(StepFailure) as exc:
        steps.parse_result(oracle.run_step(4, steps.make_fanin_frame(frames)))
    assert exc.value.code == "IncompleteFanIn"


# ---------------------------------------------------------------------------
# S5: finalize
# ---------------------------------------------------------------------------


def test_s5_deterministic(oracle):
    result = np.arange(16, dtype=np.float32).tobytes()
    a = steps.parse_result(oracle.run_step(5, steps.make_finalize_frame(result)))
    b = steps.parse_result(oracle.run_step(5, steps.make_finalize_frame(result)))
    assert a["digest"] == b["digest"]
    assert "verified" not in a


def test_s5_digest_covers_reencoded_frame(oracle, host_engine):
    result = np.arange(16, dtype=np.float32).tobytes()
    out = steps.parse_result(oracle.run_step(5, steps.make_finalize_frame(result)))
    assert out["digest"] == host_engine.blake3_reference(out["frame"])
    inner = cbor.decode(out["frame"])
    assert inner == {"v": 1, "kind": "f32", "payload": result}


def test_s5_expected_match_sets_verified(oracle):
    result = b"\x00" * 64
    digest = steps.parse_result(oracle.run_step(5, steps.make_finalize_frame(result)))["digest"]
    out = steps.parse_result(oracle.run_step(5, steps.make_finalize_frame(result, expected=digest)))
    assert out["verified"] is True


def test_s5_expected_mismatch(oracle):
    with pytest.raises(StepFailure) as exc:
        steps.parse_result(
            oracle.run_step(5, steps.make_finalize_frame(b"\x00" * 64, expected=b"\x01" * 32))
        )
    assert exc.value.code == "DigestMismatch"


def test_s5_empty_result_rejected(oracle):
    with pytest.raises(StepFailure) as exc:
        steps.parse_result(oracle.run_step(5, steps.make_finalize_frame(b"")))
    assert exc.value.code == "MalformedFrame"


# ---------------------------------------------------------------------------
# cross-cutting
# ---------------------------------------------------------------------------


def test_unknown_step_number(oracle):
    with pytest.raises(StepFailure) as exc:
        steps.parse_result(oracle.run_step(9, steps.make_data_frame(b"")))
    assert exc.value.code == "UnknownStep"


def test_unknown_keys_ignored(oracle):
    frame = cbor.encode({"v": 1, "kind": "u8", "payload": b"xy", "future_field": [1, {"a": 2}]})
    out = steps.parse_result(oracle.run_step(1, frame))
    assert out["payload"] == b"xy"


def test_step_outputs_are_canonical_cbor(oracle):
    """Re-encoding a decoded step reply with the host codec is an identity:
    the kernels emit the same canonical form the host produces."""
    data = generate(PayloadSpec(5, SMALL))
    reply = oracle.run_step(1, steps.make_data_frame(data))
    assert cbor.encode(cbor.decode(reply[1:])) == reply[1:]
    reply2 = oracle.run_step(2, reply[1:])
    assert cbor.encode(cbor.decode(reply2[1:])) == reply2[1:]


def test_pipeline_digest_is_pure_function_of_inputs(oracle):
    data = generate(PayloadSpec(3, SMALL))
    r1 = steps.run_pipeline(oracle.run_step, data, SMALL)
    r2 = steps.run_pipeline(oracle.run_step, data, SMALL)
    assert r1.digest == r2.digest
    assert len(r1.digest) == 32


# ---------------------------------------------------------------------------
# property tests over the step invariants
# ---------------------------------------------------------------------------

from hypothesis import given, settings, strategies as st  # noqa: E402


@settings(max_examples=50, deadline=None)
@given(st.binary(min_size=4, max_size=4096).filter(lambda b: len(b) % 4 == 0))
def test_s2_invariants_property(oracle, data):
    out = steps.parse_result(oracle.run_step(2, steps.make_data_frame(data)))
    values = np.frombuffer(out["payload"], dtype="<f4")
    assert len(out["payload"]) == len(data)  # same byte length
    assert np.all(values >= -1.0) and np.all(values <= 1.0)
    assert out["payload"] == s2_reference(data).tobytes()


@settings(max_examples=25, deadline=None)
@given(
    d=st.sampled_from([4, 8]),
    seed=st.integers(min_value=0, max_value=2**31),
    order=st.permutations([0, 1, 2, 3]),
)
def test_s4_assembly_invariant_property(oracle, d, seed, order):
    """Any arrival order of the four strips reduces to the same matrix."""
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((d, d), dtype=np.float32)
    frames = _strip_frames(oracle, a)
    out = steps.parse_result(
        oracle.run_step(4, steps.make_fanin_frame([frames[i] for i in order]))
    )
    assert out["payload"] == naive_matmul_f32(a).tobytes()


@settings(max_examples=50, deadline=None)
@given(st.binary(max_size=2048))
def test_s1_crc_property(oracle, data):
    out = steps.parse_result(oracle.run_step(1, steps.make_data_frame(data)))
    assert out["crc"] == zlib.crc32(data)
    assert out["payload"] == data
