"""The invocation ABI shared by every backend.

Requests and responses are CBOR maps with the normative text keys
``op``, ``step_id``, ``run_id``, ``payload``, ``status``, ``error``;
responses may additionally carry ``phase_breakdown``, ``total_us``,
``resource_samples``, and ``sampler_degraded``. Unknown keys are ignored
on decode. Large request payloads can be split into a metadata part and
a raw-bytes part for multipart transports; the payload is never base64
encoded anywhere.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field

from . import cbor

STEP_ID_RE = re.compile(r"^(S1|S2|S3\[[0-3]\]|S4|S5)$")

#: Step artifacts are keyed by logical step; S3 branches share one module.
STEP_IDS = ("S1", "S2", "S3[0]", "S3[1]", "S3[2]", "S3[3]", "S4", "S5")

DEFAULT_MULTIPART_THRESHOLD = 64 * 1024


class FrameError(ValueError):
    """Malformed or invariant-violating frame."""


class PayloadDigestMismatch(FrameError):
    """Multipart payload part does not match the metadata reference."""


class UnknownStepId(FrameError):
    """A frame names a step outside the workflow."""


def validate_step_id(step_id: str) -> str:
    if not isinstance(step_id, str) or not STEP_ID_RE.match(step_id):
        raise UnknownStepId(f"invalid step_id {step_id!r}")
    return step_id


def step_number(step_id: str) -> int:
    """Logical step (1..5) for a step id, collapsing S3 branches."""
    validate_step_id(step_id)
    return int(step_id[1])


@dataclass
class PhaseBreakdown:
    """Cold-start decomposition, all in integer microseconds.

    ``compile`` covers JIT compilation or AOT-object load depending on
    the executor mode; warm invocations report zero for every phase but
    ``execute``.
    """

    load: int = 0
    compile: int = 0
    instantiate: int = 0
    init: int = 0
    execute: int = 0

    def total(self) -> int:
        return self.load + self.compile + self.instantiate + self.init + self.execute

    def to_wire(self) -> dict:
        return {
            "load": self.load,
            "compile": self.compile,
            "instantiate": self.instantiate,
            "init": self.init,
            "execute": self.execute,
        }

    @classmethod
    def from_wire(cls, obj: dict) -> "PhaseBreakdown":
        return cls(
            load=int(obj.get("load", 0)),
            compile=int(obj.get("compile", 0)),
            instantiate=int(obj.get("instantiate", 0)),
            init=int(obj.get("init", 0)),
            execute=int(obj.get("execute", 0)),
        )


@dataclass
class ResourceSample:
    """One executor-process probe: monotonic µs, CPU % of one core, RSS."""

    t: int
    cpu_pct: float
    rss_bytes: int

    def to_wire(self) -> dict:
        return {"t": self.t, "cpu_pct": float(self.cpu_pct), "rss_bytes": self.rss_bytes}

    @classmethod
    def from_wire(cls, obj: dict) -> "ResourceSample":
        return cls(int(obj["t"]), float(obj["cpu_pct"]), int(obj["rss_bytes"]))


@dataclass
class InvokeFrame:
    step_id: str
    run_id: str
    payload: bytes
    #: optional request extras (the wire format permits extra fields);
    #: the executor honors "mode" (jit|aot) and "state" (cold|warm)
    extras: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        validate_step_id(self.step_id)
        if not self.run_id:
            raise FrameError("run_id must be nonempty")


@dataclass
class ResultFrame:
    status: str
    payload: bytes | None = None
    error: dict | None = None
    phase_breakdown: PhaseBreakdown | None = None
    total_us: int | None = None
    resource_samples: list[ResourceSample] = field(default_factory=list)
    sampler_degraded: bool = False

    def __post_init__(self) -> None:
        if self.status not in ("ok", "error"):
            raise FrameError(f"invalid status {self.status!r}")
        if self.status == "error" and self.error is None:
            raise FrameError("error result requires an error object")
        if self.status == "ok" and self.payload is None:
            raise FrameError("ok result requires a payload")

    @classmethod
    def ok(cls, payload: bytes, **kw) -> "ResultFrame":
        return cls(status="ok", payload=payload, **kw)

    @classmethod
    def fail(cls, code: str, msg: str, **kw) -> "ResultFrame":
        return cls(status="error", error={"code": code, "msg": msg}, **kw)


_EXTRA_KEYS = ("mode", "state")


def encode_invoke(frame: InvokeFrame) -> bytes:
    obj = {
        "op": "invoke",
        "step_id": frame.step_id,
        "run_id": frame.run_id,
        "payload": frame.payload,
    }
    obj.update(frame.extras)
    return cbor.encode(obj)


def decode_invoke(data: bytes) -> InvokeFrame:
    obj = _decode_map(data)
    if obj.get("op") != "invoke":
        raise FrameError(f"expected op=invoke, got {obj.get('op')!r}")
    try:
        return InvokeFrame(
            step_id=obj["step_id"],
            run_id=obj["run_id"],
            payload=_require_bytes(obj, "payload"),
            extras={k: obj[k] for k in _EXTRA_KEYS if k in obj},
        )
    except KeyError as exc:
        raise FrameError(f"missing field {exc.args[0]!r}") from None


def encode_result(frame: ResultFrame) -> bytes:
    obj: dict = {"op": "result", "status": frame.status}
    if frame.payload is not None:
        obj["payload"] = frame.payload
    if frame.error is not None:
        obj["error"] = frame.error
    if frame.phase_breakdown is not None:
        obj["phase_breakdown"] = frame.phase_breakdown.to_wire()
    if frame.total_us is not None:
        obj["total_us"] = frame.total_us
    if frame.resource_samples:
        obj["resource_samples"] = [s.to_wire() for s in frame.resource_samples]
    if frame.sampler_degraded:
        obj["sampler_degraded"] = True
    return cbor.encode(obj)


def decode_result(data: bytes) -> ResultFrame:
    obj = _decode_map(data)
    if obj.get("op") != "result":
        raise FrameError(f"expected op=result, got {obj.get('op')!r}")
    phases = obj.get("phase_breakdown")
    samples = obj.get("resource_samples") or []
    return ResultFrame(
        status=obj.get("status", ""),
        payload=obj.get("payload"),
        error=obj.get("error"),
        phase_breakdown=PhaseBreakdown.from_wire(phases) if phases is not None else None,
        total_us=int(obj["total_us"]) if "total_us" in obj else None,
        resource_samples=[ResourceSample.from_wire(s) for s in samples],
        sampler_degraded=bool(obj.get("sampler_degraded", False)),
    )


def split_multipart(
    frame: InvokeFrame, threshold: int = DEFAULT_MULTIPART_THRESHOLD
) -> tuple[bytes, bytes | None]:
    """Split an invoke frame for multipart transports.

    Payloads under ``threshold`` stay inline and the second part is
    ``None``. At or above it, the metadata part elides the payload and
    carries a length + digest reference; the payload travels as raw
    bytes.
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    if len(frame.payload) < threshold:
        return encode_invoke(frame), None
    obj = {
        "op": "invoke",
        "step_id": frame.step_id,
        "run_id": frame.run_id,
        "payload_ref": {
            "len": len(frame.payload),
            "sha256": hashlib.sha256(frame.payload).digest(),
        },
    }
    obj.update(frame.extras)
    return cbor.encode(obj), frame.payload


def join_multipart(meta: bytes, payload_part: bytes | None) -> InvokeFrame:
    """Inverse of :func:`split_multipart`; verifies the payload reference."""
    obj = _decode_map(meta)
    if obj.get("op") != "invoke":
        raise FrameError(f"expected op=invoke, got {obj.get('op')!r}")
    if payload_part is None:
        if "payload" not in obj:
            raise FrameError("single-part frame without payload")
        return decode_invoke(meta)
    ref = obj.get("payload_ref")
    if not isinstance(ref, dict):
        raise FrameError("payload part present but metadata has no payload_ref")
    if ref.get("len") != len(payload_part):
        raise PayloadDigestMismatch(
            f"payload length {len(payload_part)} != declared {ref.get('len')}"
        )
    if hashlib.sha256(payload_part).digest() != ref.get("sha256"):
        raise PayloadDigestMismatch("payload digest does not match payload_ref")
    try:
        return InvokeFrame(
            step_id=obj["step_id"],
            run_id=obj["run_id"],
            payload=payload_part,
            extras={k: obj[k] for k in _EXTRA_KEYS if k in obj},
        )
    except KeyError as exc:
        raise FrameError(f"missing field {exc.args[0]!r}") from None


def _decode_map(data: bytes) -> dict:
    try:
        obj = cbor.decode(data)
    except cbor.CBORError as exc:
        raise FrameError(f"bad CBOR: {exc}") from exc
    if not isinstance(obj, dict):
        raise FrameError("frame must be a CBOR map")
    return obj


def _require_bytes(obj: dict, key: str) -> bytes:
    value = obj[key]
    if not isinstance(value, bytes):
        raise FrameError(f"{key} must be a byte string")
    return value
