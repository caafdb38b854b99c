"""Host-side view of the five workflow steps.

The kernels themselves live in the C sources and run either as wasm
guests or through the native oracle library; this module owns the frame
schemas the steps exchange, the matrix sizing rule, and a sequential
pipeline driver that works against any step runner (native oracle,
executor backend, or a test stub).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

from . import cbor
from .payloads import SizeClass

SCHEMA_VERSION = 1

#: Matrix dimension by payload class: d = sqrt(payload_bytes / 4).
_DIMS = {16 * 1024: 64, 1024 * 1024: 512, 4 * 1024 * 1024: 1024}

FAN_OUT = 4


class StepFailure(Exception):
    """A step returned a structured error instead of a result frame."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


def d_of(size_class: SizeClass) -> int:
    """Matrix dimension for a payload class (64 / 512 / 1024)."""
    try:
        return _DIMS[size_class.byte_size]
    except KeyError:
        d = math.isqrt(size_class.byte_size // 4)
        if d * d * 4 != size_class.byte_size:
            raise ValueError(f"{size_class.byte_size} bytes is not 4*d^2 for integer d") from None
        return d


def make_data_frame(payload: bytes, kind: str = "u8", crc: int | None = None) -> bytes:
    frame: dict = {"v": SCHEMA_VERSION, "kind": kind, "payload": payload}
    if crc is not None:
        frame["crc"] = crc
    return cbor.encode(frame)


def make_block_frame(matrix: bytes, d: int, rows_from: int, rows_to: int) -> bytes:
    return cbor.encode(
        {
            "v": SCHEMA_VERSION,
            "kind": "f32",
            "d": d,
            "rows_from": rows_from,
            "rows_to": rows_to,
            "payload": matrix,
        }
    )


def make_fanin_frame(block_frames: Sequence[bytes]) -> bytes:
    return cbor.encode({"v": SCHEMA_VERSION, "blocks": list(block_frames)})


def make_finalize_frame(result: bytes, expected: bytes | None = None) -> bytes:
    frame: dict = {"v": SCHEMA_VERSION, "kind": "f32", "payload": result}
    if expected is not None:
        frame["expected"] = expected
    return cbor.encode(frame)


def parse_result(tagged: bytes) -> dict:
    """Split a tag-prefixed step reply; raises StepFailure on error tag."""
    if not tagged:
        raise StepFailure("EmptyReply", "step returned no bytes")
    body = cbor.decode(tagged[1:])
    if tagged[0] == 0:
        return body
    raise StepFailure(body.get("code", "UnknownError"), body.get("msg", ""))


def strip_bounds(d: int, branch: int, fan_out: int = FAN_OUT) -> tuple[int, int]:
    """Row range handled by fan-out branch ``branch``."""
    if not 0 <= branch < fan_out:
        raise ValueError(f"branch {branch} outside fan-out {fan_out}")
    rows = d // fan_out
    return branch * rows, d if branch == fan_out - 1 else (branch + 1) * rows


#: A step runner: (step number 1-5, request frame) -> tag-prefixed reply.
StepRunner = Callable[[int, bytes], bytes]


@dataclass
class PipelineResult:
    final_frame: dict
    digest: bytes
    step_outputs: dict[str, bytes]


def run_pipeline(
    runner: StepRunner,
    payload: bytes,
    size_class: SizeClass,
    expected: bytes | None = None,
) -> PipelineResult:
    """Drive S1..S5 sequentially through ``runner``.

    Data flows exactly as the orchestrator would route it: every step's
    output frame is the next step's input, with the host only splitting
    the S2 matrix across the four S3 branches and collecting them for S4.
    """
    d = d_of(size_class)
    outputs: dict[str, bytes] = {}

    r1 = parse_and_keep(runner, 1, make_data_frame(payload), outputs, "S1")
    r2 = parse_and_keep(runner, 2, outputs["S1"], outputs, "S2")
    matrix = r2["payload"]
    if len(matrix) != d * d * 4:
        raise StepFailure("DimensionMismatch", f"S2 produced {len(matrix)} bytes, want {d * d * 4}")

    block_frames = []
    for branch in range(FAN_OUT):
        lo, hi = strip_bounds(d, branch)
        parse_and_keep(runner, 3, make_block_frame(matrix, d, lo, hi), outputs, f"S3[{branch}]")
        block_frames.append(outputs[f"S3[{branch}]"])

    r4 = parse_and_keep(runner, 4, make_fanin_frame(block_frames), outputs, "S4")
    r5 = parse_and_keep(runner, 5, make_finalize_frame(r4["payload"], expected), outputs, "S5")
    return PipelineResult(final_frame=r5, digest=r5["digest"], step_outputs=outputs)


def parse_and_keep(
    runner: StepRunner, step: int, frame: bytes, outputs: dict[str, bytes], label: str
) -> dict:
    reply = runner(step, frame)
    parsed = parse_result(reply)
    outputs[label] = reply[1:]
    return parsed
