"""The executor: a Wasm engine behind ``POST /invoke``.

Hosts the step modules in an embedded engine, manages cold (one-shot)
and warm (pooled) instances for both JIT and AOT artifacts, and reports
the startup phase breakdown plus best-effort CPU/RSS samples for every
invocation. Requests arrive as a CBOR binary body or, for large
payloads, as ``multipart/form-data`` with fields ``meta`` and
``payload``; responses are always a CBOR result frame.

Apart from artifact loading, the request path never touches the file
system: frames move through memory only.
"""

from __future__ import annotations

import email.parser
import email.policy
import json
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from . import engine as engine_mod
from .artifacts import STEP_IDS, wasm_artifact_name
from .engine import AOT_SUFFIX, EngineError, ExecutionTimeout, HostEngine, StepTrap
from .frames import (
    InvokeFrame,
    PayloadDigestMismatch,
    FrameError,
    PhaseBreakdown,
    ResultFrame,
    UnknownStepId,
    decode_invoke,
    encode_result,
    join_multipart,
    step_number,
)
from .sampler import ResourceSampler

DEFAULT_TIMEOUT_S = 120.0
DEFAULT_SAMPLE_PERIOD_S = 0.020

_now_us = lambda: time.monotonic_ns() // 1000


class MissingArtifact(FileNotFoundError):
    """A step artifact required by the configured mode is absent."""


class PoolExhausted(RuntimeError):
    """No pooled instance became available within the invocation timeout."""


@dataclass
class ExecutorConfig:
    artifact_dir: Path
    mode: str = "jit"  # jit | aot
    state_policy: str = "warm_pool"  # warm_pool | cold_oneshot
    pool_size: int = 1
    sample_period_s: float = DEFAULT_SAMPLE_PERIOD_S
    timeout_s: float = DEFAULT_TIMEOUT_S

    def __post_init__(self) -> None:
        self.artifact_dir = Path(self.artifact_dir)
        if self.mode not in ("jit", "aot"):
            raise ValueError(f"invalid mode {self.mode!r}")
        if self.state_policy not in ("warm_pool", "cold_oneshot"):
            raise ValueError(f"invalid state policy {self.state_policy!r}")
        if self.state_policy == "warm_pool" and self.pool_size < 1:
            raise ValueError("pool_size must be >= 1 for warm_pool")
        if self.sample_period_s <= 0:
            raise ValueError("sample period must be positive")


@dataclass
class ArtifactSizeEntry:
    step: str
    wasm_bytes: int
    aot_bytes: int

    @property
    def pct_increase(self) -> int:
        return pct_increase(self.wasm_bytes, self.aot_bytes)

    def to_json(self) -> dict:
        return {
            "step": self.step,
            "wasm_bytes": self.wasm_bytes,
            "aot_bytes": self.aot_bytes,
            "pct_increase": self.pct_increase,
        }


def pct_increase(wasm_bytes: int, aot_bytes: int) -> int:
    """Rounded percentage growth of the AOT object over the wasm module."""
    if wasm_bytes <= 0:
        raise ValueError("wasm size must be positive")
    return round(100.0 * (aot_bytes / wasm_bytes - 1.0))


def report_artifact_sizes(artifact_dir: Path | str) -> list[ArtifactSizeEntry]:
    """Size accounting per step; requires both artifact kinds for all steps."""
    artifact_dir = Path(artifact_dir)
    entries = []
    for step in STEP_IDS:
        wasm = artifact_dir / wasm_artifact_name(step)
        aot = wasm.with_suffix(AOT_SUFFIX)
        if not wasm.exists():
            raise MissingArtifact(str(wasm))
        if not aot.exists():
            raise MissingArtifact(str(aot))
        entries.append(
            ArtifactSizeEntry(
                step=step, wasm_bytes=wasm.stat().st_size, aot_bytes=aot.stat().st_size
            )
        )
    return entries


@dataclass
class _PooledInstance:
    module: object
    instance: object


class _StepPool:
    """Warm instances for one step/mode pair; checkout blocks when all
    pool_size instances are busy, serializing callers."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.created = 0
        self.idle: list[_PooledInstance] = []
        self.cond = threading.Condition()

    def checkout(self, timeout_s: float) -> _PooledInstance | None:
        """An idle instance, or None when the caller should create one."""
        with self.cond:
            deadline = time.monotonic() + timeout_s
            while True:
                if self.idle:
                    return self.idle.pop()
                if self.created < self.capacity:
                    self.created += 1
                    return None
                remaining = deadline - time.monotonic()
                if remaining <= 0 or not self.cond.wait(timeout=remaining):
                    raise PoolExhausted(
                        f"no instance available within {timeout_s:.0f}s "
                        f"(pool_size={self.capacity})"
                    )

    def checkin(self, inst: _PooledInstance) -> None:
        with self.cond:
            self.idle.append(inst)
            self.cond.notify()

    def abandon(self) -> None:
        """Give back a creation slot after a failed instantiation."""
        with self.cond:
            self.created -= 1
            self.cond.notify()

    def drain(self) -> list[_PooledInstance]:
        with self.cond:
            drained = self.idle
            self.idle = []
            self.created -= len(drained)
            self.cond.notify_all()
            return drained


class StepExecutor:
    """Engine host with cold/warm lifecycles and phase accounting."""

    def __init__(self, config: ExecutorConfig, host_engine: HostEngine | None = None):
        self.config = config
        self.engine = host_engine if host_engine is not None else engine_mod.WasmtimeEngine()
        self.sampler = ResourceSampler(period_s=config.sample_period_s)
        self.sampler.start()
        self._pools: dict[tuple[int, str], _StepPool] = {}
        self._pools_lock = threading.Lock()
        self._artifact_cache: dict[tuple[int, str], bytes] = {}
        self._cache_lock = threading.Lock()

    # -- artifact handling -------------------------------------------------

    def _artifact_path(self, step: int, mode: str) -> Path:
        wasm = self.config.artifact_dir / wasm_artifact_name(f"S{step}")
        return wasm if mode == "jit" else wasm.with_suffix(AOT_SUFFIX)

    def _artifact_bytes(self, step: int, mode: str) -> bytes:
        # cache keeps repeat loads off the disk; the load phase is charged
        # per invocation regardless so cold timings stay honest
        key = (step, mode)
        with self._cache_lock:
            cached = self._artifact_cache.get(key)
        if cached is not None:
            return cached
        path = self._artifact_path(step, mode)
        if not path.exists():
            raise MissingArtifact(str(path))
        data = path.read_bytes()
        with self._cache_lock:
            self._artifact_cache[key] = data
        return data

    def _pool(self, step: int, mode: str) -> _StepPool:
        with self._pools_lock:
            pool = self._pools.get((step, mode))
            if pool is None:
                pool = _StepPool(self.config.pool_size)
                self._pools[(step, mode)] = pool
            return pool

    # -- lifecycle ---------------------------------------------------------

    def _build_instance(self, step: int, mode: str, phases: PhaseBreakdown) -> _PooledInstance:
        t0 = _now_us()
        data = self._artifact_bytes(step, mode)
        t1 = _now_us()
        if mode == "jit":
            module = self.engine.compile(data)
        else:
            module = self.engine.load_precompiled(data)
        t2 = _now_us()
        try:
            instance = self.engine.instantiate(module)
        except EngineError:
            self.engine.free_module(module)
            raise
        t3 = _now_us()
        try:
            self.engine.initialize(instance)
        except EngineError:
            self._destroy(_PooledInstance(module, instance))
            raise
        t4 = _now_us()
        phases.load = t1 - t0
        phases.compile = t2 - t1
        phases.instantiate = t3 - t2
        phases.init = t4 - t3
        return _PooledInstance(module, instance)

    def _destroy(self, inst: _PooledInstance) -> None:
        self.engine.free_instance(inst.instance)
        self.engine.free_module(inst.module)

    # -- operations --------------------------------------------------------

    def invoke(self, frame: InvokeFrame) -> ResultFrame:
        """Execute one step invocation.

        The frame's optional "mode"/"state" extras select the artifact
        kind and lifecycle per request; absent extras fall back to the
        executor's configured defaults.
        """
        mode = frame.extras.get("mode") or self.config.mode
        state = frame.extras.get("state") or (
            "warm" if self.config.state_policy == "warm_pool" else "cold"
        )
        if mode not in ("jit", "aot"):
            return ResultFrame.fail("BadRequest", f"invalid mode {mode!r}")
        if state not in ("warm", "cold"):
            return ResultFrame.fail("BadRequest", f"invalid state {state!r}")
        try:
            step = step_number(frame.step_id)
        except FrameError:
            return ResultFrame.fail("UnknownStep", f"unknown step_id {frame.step_id!r}")

        timeout_s = self.config.timeout_s
        phases = PhaseBreakdown()
        t_start = _now_us()
        pool = self._pool(step, mode) if state == "warm" else None
        pooled: _PooledInstance | None = None
        created = False
        try:
            if pool is not None:
                pooled = pool.checkout(timeout_s)
            if pooled is None:
                created = True
                pooled = self._build_instance(step, mode, phases)
        except MissingArtifact as exc:
            if pool is not None and created:
                pool.abandon()
            return ResultFrame.fail("MissingArtifact", str(exc))
        except PoolExhausted as exc:
            return ResultFrame.fail("PoolExhausted", str(exc))
        except EngineError as exc:
            if pool is not None and created:
                pool.abandon()
            return ResultFrame.fail("InvalidModule", str(exc))

        exec_t0 = _now_us()
        try:
            reply = self.engine.call(pooled.instance, frame.payload, int(timeout_s * 1000))
        except (ExecutionTimeout, StepTrap, EngineError) as exc:
            # a faulted or timed-out instance never returns to the pool
            self._destroy(pooled)
            if pool is not None:
                pool.abandon()
            code = "Timeout" if isinstance(exc, ExecutionTimeout) else "StepTrap"
            return ResultFrame.fail(code, str(exc))
        exec_t1 = _now_us()
        phases.execute = exec_t1 - exec_t0

        if pool is not None:
            pool.checkin(pooled)
        else:
            self._destroy(pooled)

        result = ResultFrame.ok(
            payload=bytes(reply),
            phase_breakdown=phases,
            total_us=_now_us() - t_start,
            resource_samples=self.sampler.window(exec_t0, exec_t1),
            sampler_degraded=self.sampler.degraded,
        )
        return result

    def reset_pool(self) -> int:
        """Destroy all pooled instances; the next invocations are cold."""
        with self._pools_lock:
            pools = list(self._pools.values())
        drained = 0
        for pool in pools:
            for inst in pool.drain():
                self._destroy(inst)
                drained += 1
        return drained

    def artifact_sizes(self) -> list[ArtifactSizeEntry]:
        return report_artifact_sizes(self.config.artifact_dir)

    def close(self) -> None:
        self.reset_pool()
        self.sampler.stop()


# ---------------------------------------------------------------------------
# HTTP front end
# ---------------------------------------------------------------------------


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    executor: StepExecutor  # set by server factory

    def log_message(self, fmt: str, *args) -> None:  # quiet by default
        pass

    def _reply(self, status: int, body: bytes, content_type: str) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _reply_result(self, result: ResultFrame) -> None:
        self._reply(200, encode_result(result), "application/cbor")

    def do_GET(self) -> None:
        if self.path == "/healthz":
            info = {
                "status": "ok",
                "engine": getattr(self.executor.engine, "name", "unknown"),
                "mode": self.executor.config.mode,
                "state_policy": self.executor.config.state_policy,
            }
            self._reply(200, json.dumps(info).encode(), "application/json")
        elif self.path == "/artifacts/sizes":
            try:
                entries = [e.to_json() for e in self.executor.artifact_sizes()]
            except MissingArtifact as exc:
                self._reply(404, json.dumps({"error": str(exc)}).encode(), "application/json")
                return
            self._reply(200, json.dumps(entries).encode(), "application/json")
        else:
            self._reply(404, b"not found", "text/plain")

    def do_POST(self) -> None:
        if self.path == "/pool/reset":
            drained = self.executor.reset_pool()
            self._reply(200, json.dumps({"drained": drained}).encode(), "application/json")
            return
        if self.path != "/invoke":
            self._reply(404, b"not found", "text/plain")
            return
        length = int(self.headers.get("Content-Length", "0"))
        body = self.rfile.read(length)
        content_type = self.headers.get("Content-Type", "")
        try:
            if content_type.startswith("multipart/form-data"):
                frame = _parse_multipart(body, content_type)
            else:
                frame = decode_invoke(body)
        except PayloadDigestMismatch as exc:
            self._reply_result(ResultFrame.fail("PayloadDigestMismatch", str(exc)))
            return
        except UnknownStepId as exc:
            self._reply_result(ResultFrame.fail("UnknownStep", str(exc)))
            return
        except FrameError as exc:
            self._reply_result(ResultFrame.fail("MalformedFrame", str(exc)))
            return
        self._reply_result(self.executor.invoke(frame))


def _parse_multipart(body: bytes, content_type: str) -> InvokeFrame:
    parser = email.parser.BytesParser(policy=email.policy.HTTP)
    msg = parser.parsebytes(
        b"Content-Type: " + content_type.encode() + b"\r\nMIME-Version: 1.0\r\n\r\n" + body
    )
    meta: bytes | None = None
    payload: bytes | None = None
    for part in msg.iter_parts():
        name = part.get_param("name", header="content-disposition")
        if name == "meta":
            meta = part.get_payload(decode=True)
        elif name == "payload":
            payload = part.get_payload(decode=True)
    if meta is None:
        raise FrameError("multipart request missing 'meta' field")
    return join_multipart(meta, payload)


class ExecutorServer:
    """Threaded HTTP server wrapper usable programmatically and by the CLI."""

    def __init__(
        self,
        config: ExecutorConfig,
        host: str = "127.0.0.1",
        port: int = 0,
        host_engine: HostEngine | None = None,
    ):
        self.executor = StepExecutor(config, host_engine=host_engine)
        handler = type("BoundHandler", (_Handler,), {"executor": self.executor})
        self._httpd = ThreadingHTTPServer((host, port), handler)
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "ExecutorServer":
        self._thread = threading.Thread(
            target=self._httpd.serve_forever, name="executor-http", daemon=True
        )
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._httpd.serve_forever()

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None
        self.executor.close()
