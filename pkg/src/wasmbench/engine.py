"""Host-engine abstraction backing the executor.

The executor drives any embeddable Wasm engine through four phase-aligned
operations: compile (or load a precompiled object), instantiate,
initialize, and call. The default implementation binds a small C-ABI
shim library around an embedded engine (built from ``engine/`` in this
repository); alternative engines can back the same interface as a
build-time choice.
"""

from __future__ import annotations

import ctypes
import hashlib
import os
from pathlib import Path
from typing import Protocol

AOT_SUFFIX = ".cwasm"

_ENGINE_ENV = "WASMBENCH_ENGINE_LIB"


class EngineError(RuntimeError):
    """Base class for engine failures."""


class EngineUnavailable(EngineError):
    """No engine library could be located or loaded."""


class InvalidModule(EngineError):
    """The artifact is not a loadable module for this engine."""


class StepTrap(EngineError):
    """The guest faulted during execution."""


class ExecutionTimeout(EngineError):
    """The guest exceeded its invocation deadline."""


class HostEngine(Protocol):
    """Phase-aligned engine operations; handles are engine-opaque."""

    name: str

    def compile(self, wasm_bytes: bytes): ...

    def load_precompiled(self, obj_bytes: bytes): ...

    def precompile(self, wasm_bytes: bytes) -> bytes: ...

    def instantiate(self, module): ...

    def initialize(self, instance) -> None: ...

    def call(self, instance, frame: bytes, timeout_ms: int) -> bytes: ...

    def free_module(self, module) -> None: ...

    def free_instance(self, instance) -> None: ...


def default_engine_library() -> Path:
    """Locate the engine shim library (env override, then repo build)."""
    env = os.environ.get(_ENGINE_ENV)
    if env:
        return Path(env)
    here = Path(__file__).resolve()
    for root in list(here.parents)[:5]:
        candidate = root / "engine" / "target" / "release" / "libwasmbench_engine.so"
        if candidate.exists():
            return candidate
    raise EngineUnavailable(
        f"engine library not found; build engine/ with cargo or set ${_ENGINE_ENV}"
    )


class WasmtimeEngine:
    """Embedded engine bound through the C-ABI shim library."""

    def __init__(self, library: Path | str | None = None):
        path = Path(library) if library else default_engine_library()
        try:
            lib = ctypes.CDLL(str(path))
        except OSError as exc:
            raise EngineUnavailable(f"cannot load engine library {path}: {exc}") from exc
        self._lib = _declare(lib)
        self._handle = self._lib.wbe_engine_new()
        if not self._handle:
            raise EngineUnavailable(self._last_error())
        buf = ctypes.create_string_buffer(128)
        n = self._lib.wbe_version(buf, 128)
        self.name = buf.raw[:n].decode()

    def close(self) -> None:
        if self._handle:
            self._lib.wbe_engine_free(self._handle)
            self._handle = None

    def _last_error(self) -> str:
        buf = ctypes.create_string_buffer(4096)
        n = self._lib.wbe_last_error(buf, 4096)
        return buf.raw[:n].decode(errors="replace")

    def compile(self, wasm_bytes: bytes):
        module = self._lib.wbe_compile(self._handle, wasm_bytes, len(wasm_bytes))
        if not module:
            raise InvalidModule(self._last_error())
        return module

    def load_precompiled(self, obj_bytes: bytes):
        module = self._lib.wbe_deserialize(self._handle, obj_bytes, len(obj_bytes))
        if not module:
            raise InvalidModule(self._last_error())
        return module

    def precompile(self, wasm_bytes: bytes) -> bytes:
        module = self.compile(wasm_bytes)
        try:
            out = ctypes.POINTER(ctypes.c_uint8)()
            out_len = ctypes.c_size_t()
            if self._lib.wbe_serialize(module, ctypes.byref(out), ctypes.byref(out_len)) != 0:
                raise InvalidModule(self._last_error())
            try:
                return ctypes.string_at(out, out_len.value)
            finally:
                self._lib.wbe_bytes_free(out, out_len)
        finally:
            self.free_module(module)

    def instantiate(self, module):
        instance = self._lib.wbe_instantiate(self._handle, module)
        if not instance:
            raise InvalidModule(self._last_error())
        return instance

    def initialize(self, instance) -> None:
        if self._lib.wbe_initialize(instance) != 0:
            raise StepTrap(self._last_error())

    def call(self, instance, frame: bytes, timeout_ms: int) -> bytes:
        out = ctypes.POINTER(ctypes.c_uint8)()
        out_len = ctypes.c_size_t()
        rc = self._lib.wbe_call_run(
            instance, frame, len(frame), timeout_ms, ctypes.byref(out), ctypes.byref(out_len)
        )
        if rc == 2:
            raise ExecutionTimeout(self._last_error())
        if rc != 0:
            raise StepTrap(self._last_error())
        try:
            return ctypes.string_at(out, out_len.value)
        finally:
            self._lib.wbe_bytes_free(out, out_len)

    def free_module(self, module) -> None:
        self._lib.wbe_module_free(module)

    def free_instance(self, instance) -> None:
        self._lib.wbe_instance_free(instance)

    def blake3_reference(self, data: bytes) -> bytes:
        """Upstream BLAKE3, used by tests as the independent reference."""
        out = ctypes.create_string_buffer(32)
        self._lib.wbe_blake3_ref(data, len(data), out)
        return out.raw


def precompile_aot(wasm_artifact: Path, engine: HostEngine | None = None) -> Path:
    """Produce the engine-native precompiled object next to the input.

    Idempotent: re-runs hit the cache keyed on the wasm content digest.
    """
    wasm_artifact = Path(wasm_artifact)
    if not wasm_artifact.exists():
        raise InvalidModule(f"no such artifact: {wasm_artifact}")
    out_path = wasm_artifact.with_suffix(AOT_SUFFIX)
    stamp_path = out_path.with_suffix(AOT_SUFFIX + ".src")
    wasm_bytes = wasm_artifact.read_bytes()
    digest = hashlib.sha256(wasm_bytes).hexdigest()
    if out_path.exists() and stamp_path.exists() and stamp_path.read_text().strip() == digest:
        return out_path
    if engine is None:
        engine = WasmtimeEngine()
    out_path.write_bytes(engine.precompile(wasm_bytes))
    stamp_path.write_text(digest + "\n")
    return out_path


def _declare(lib: ctypes.CDLL) -> ctypes.CDLL:
    p8 = ctypes.POINTER(ctypes.c_uint8)
    lib.wbe_engine_new.restype = ctypes.c_void_p
    lib.wbe_engine_free.argtypes = [ctypes.c_void_p]
    lib.wbe_compile.argtypes = [ctypes.c_void_p, ctypes.c_char_p, ctypes.c_size_t]
    lib.wbe_compile.restype = ctypes.c_void_p
    lib.wbe_deserialize.argtypes = [ctypes.c_void_p, ctypes.c_char_p, ctypes.c_size_t]
    lib.wbe_deserialize.restype = ctypes.c_void_p
    lib.wbe_serialize.argtypes = [ctypes.c_void_p, ctypes.POINTER(p8), ctypes.POINTER(ctypes.c_size_t)]
    lib.wbe_serialize.restype = ctypes.c_int
    lib.wbe_module_free.argtypes = [ctypes.c_void_p]
    lib.wbe_instantiate.argtypes = [ctypes.c_void_p, ctypes.c_void_p]
    lib.wbe_instantiate.restype = ctypes.c_void_p
    lib.wbe_initialize.argtypes = [ctypes.c_void_p]
    lib.wbe_initialize.restype = ctypes.c_int
    lib.wbe_call_run.argtypes = [
        ctypes.c_void_p,
        ctypes.c_char_p,
        ctypes.c_size_t,
        ctypes.c_uint64,
        ctypes.POINTER(p8),
        ctypes.POINTER(ctypes.c_size_t),
    ]
    lib.wbe_call_run.restype = ctypes.c_int
    lib.wbe_instance_free.argtypes = [ctypes.c_void_p]
    lib.wbe_bytes_free.argtypes = [p8, ctypes.c_size_t]
    lib.wbe_last_error.argtypes = [ctypes.c_char_p, ctypes.c_size_t]
    lib.wbe_last_error.restype = ctypes.c_size_t
    lib.wbe_blake3_ref.argtypes = [ctypes.c_char_p, ctypes.c_size_t, ctypes.c_char_p]
    lib.wbe_version.argtypes = [ctypes.c_char_p, ctypes.c_size_t]
    lib.wbe_version.restype = ctypes.c_size_t
    return lib
