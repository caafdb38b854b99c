"""Backend transports the orchestrator can trigger tasks over.

Every backend exposes the same three operations: invoke one step with a
frame, force the next invocations cold, and a health probe. The HTTP
transport talks to the executor shim (CBOR binary body, or multipart
for large payloads); the local transport embeds an executor in-process;
the stub transport fakes a backend deterministically for protocol
tests. Request extras ("mode", "state") ride inside the frame, so the
same frame means the same thing on every transport.
"""

from __future__ import annotations

import threading
import time
from typing import Callable, Protocol

import requests

from .frames import (
    DEFAULT_MULTIPART_THRESHOLD,
    InvokeFrame,
    PhaseBreakdown,
    ResultFrame,
    decode_invoke,
    decode_result,
    encode_result,
    join_multipart,
    split_multipart,
    step_number,
)


class BackendUnavailable(RuntimeError):
    """The backend cannot be reached or refuses service."""


class Transport(Protocol):
    #: whether cold runs need an explicit pool reset first; executors that
    #: honor per-invocation one-shot state keep cold runs cold without one,
    #: which leaves warm-pool instances of other cells untouched
    requires_reset_for_cold: bool

    def invoke(self, frame: InvokeFrame) -> ResultFrame: ...

    def reset(self) -> None: ...

    def healthy(self) -> bool: ...

    def close(self) -> None: ...


class HttpTransport:
    """Client for the executor shim's ``POST /invoke`` endpoint."""

    requires_reset_for_cold = False  # cold rides per-invocation one-shot state

    def __init__(
        self,
        base_url: str,
        multipart_threshold: int = DEFAULT_MULTIPART_THRESHOLD,
        timeout_s: float = 300.0,
    ):
        self.base_url = base_url.rstrip("/")
        self.multipart_threshold = multipart_threshold
        self.timeout_s = timeout_s
        self._local = threading.local()

    def _session(self) -> requests.Session:
        # one session per thread: fan-out dispatch uses parallel callers
        session = getattr(self._local, "session", None)
        if session is None:
            session = requests.Session()
            self._local.session = session
        return session

    def invoke(self, frame: InvokeFrame) -> ResultFrame:
        meta, payload_part = split_multipart(frame, self.multipart_threshold)
        try:
            if payload_part is None:
                resp = self._session().post(
                    f"{self.base_url}/invoke",
                    data=meta,
                    headers={"Content-Type": "application/cbor"},
                    timeout=self.timeout_s,
                )
            else:
                resp = self._session().post(
                    f"{self.base_url}/invoke",
                    files={
                        "meta": ("meta", meta, "application/cbor"),
                        "payload": ("payload", payload_part, "application/octet-stream"),
                    },
                    timeout=self.timeout_s,
                )
        except requests.RequestException as exc:
            raise BackendUnavailable(f"{self.base_url}: {exc}") from exc
        if resp.status_code != 200:
            raise BackendUnavailable(f"{self.base_url}: HTTP {resp.status_code}")
        return decode_result(resp.content)

    def reset(self) -> None:
        try:
            resp = self._session().post(f"{self.base_url}/pool/reset", timeout=self.timeout_s)
        except requests.RequestException as exc:
            raise BackendUnavailable(f"{self.base_url}: {exc}") from exc
        if resp.status_code != 200:
            raise BackendUnavailable(f"{self.base_url}: reset failed HTTP {resp.status_code}")

    def healthy(self) -> bool:
        try:
            resp = self._session().get(f"{self.base_url}/healthz", timeout=10.0)
            return resp.status_code == 200
        except requests.RequestException:
            return False

    def close(self) -> None:
        session = getattr(self._local, "session", None)
        if session is not None:
            session.close()


class LocalTransport:
    """In-process executor, for development and hermetic tests. Frames
    still round-trip through the wire codec so the path stays honest."""

    requires_reset_for_cold = False

    def __init__(self, executor):
        self.executor = executor

    def invoke(self, frame: InvokeFrame) -> ResultFrame:
        meta, payload_part = split_multipart(frame)
        rebuilt = decode_invoke(meta) if payload_part is None else join_multipart(meta, payload_part)
        return decode_result(encode_result(self.executor.invoke(rebuilt)))

    def reset(self) -> None:
        self.executor.reset_pool()

    def healthy(self) -> bool:
        return True

    def close(self) -> None:
        self.executor.close()


class StubTransport:
    """Deterministic fake backend for protocol and statistics tests.

    ``handler`` maps (step number, step frame bytes) to a tag-prefixed
    step reply (the native oracle's ``run_step`` fits directly); without
    one, every invocation succeeds with an empty CBOR map after
    ``delay_s`` of simulated work.
    """

    requires_reset_for_cold = True  # exercises the reset protocol in tests

    def __init__(
        self,
        handler: Callable[[int, bytes], bytes] | None = None,
        delay_s: float = 0.0,
        fail_health: bool = False,
    ):
        self.handler = handler
        self.delay_s = delay_s
        self.fail_health = fail_health
        self.invocations: list[tuple[str, str, str]] = []
        self.resets = 0
        self._lock = threading.Lock()

    def invoke(self, frame: InvokeFrame) -> ResultFrame:
        state = frame.extras.get("state", "warm")
        with self._lock:
            self.invocations.append((frame.step_id, frame.extras.get("mode", "jit"), state))
        if self.delay_s:
            time.sleep(self.delay_s)
        if self.handler is not None:
            reply = self.handler(step_number(frame.step_id), frame.payload)
        else:
            reply = b"\x00\xa0"  # ok tag + empty CBOR map
        phases = (
            PhaseBreakdown(execute=1)
            if state == "warm"
            else PhaseBreakdown(load=1, compile=1, instantiate=1, init=1, execute=1)
        )
        wire = encode_result(ResultFrame.ok(payload=reply, phase_breakdown=phases, total_us=5))
        return decode_result(wire)

    def reset(self) -> None:
        self.resets += 1

    def healthy(self) -> bool:
        return not self.fail_health

    def close(self) -> None:
        pass
