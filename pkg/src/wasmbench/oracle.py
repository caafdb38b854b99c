"""ctypes wrapper for the native build of the step kernels.

The native library is compiled from the same sources as the wasm guests
and serves as the correctness oracle: for any (seed, size class) both
builds must produce byte-identical step outputs and the same final
digest.
"""

from __future__ import annotations

import ctypes
import threading
from pathlib import Path

from .artifacts import native_lib_name


class NativeOracle:
    """Step kernels, BLAKE3 and CRC32 via the native shared library.

    The library works out of one static arena, so calls are serialized
    behind a lock; concurrent callers simply queue.
    """

    def __init__(self, lib_path: Path | str):
        self._lock = threading.Lock()
        self._lib = ctypes.CDLL(str(lib_path))
        self._lib.wb_run.argtypes = [
            ctypes.c_int,
            ctypes.c_char_p,
            ctypes.c_size_t,
            ctypes.POINTER(ctypes.POINTER(ctypes.c_uint8)),
            ctypes.POINTER(ctypes.c_size_t),
        ]
        self._lib.wb_run.restype = ctypes.c_int
        self._lib.wb_buf_free.argtypes = [ctypes.POINTER(ctypes.c_uint8)]
        self._lib.wb_buf_free.restype = None
        self._lib.wb_blake3_hash.argtypes = [ctypes.c_char_p, ctypes.c_size_t, ctypes.c_char_p]
        self._lib.wb_blake3_hash.restype = None
        self._lib.wb_crc32_hash.argtypes = [ctypes.c_char_p, ctypes.c_size_t]
        self._lib.wb_crc32_hash.restype = ctypes.c_uint32

    @classmethod
    def from_artifact_dir(cls, artifact_dir: Path | str) -> "NativeOracle":
        return cls(Path(artifact_dir) / native_lib_name())

    def run_step(self, step: int, frame: bytes) -> bytes:
        """Run one step; returns the tag-prefixed reply buffer."""
        out = ctypes.POINTER(ctypes.c_uint8)()
        out_len = ctypes.c_size_t()
        with self._lock:
            rc = self._lib.wb_run(step, frame, len(frame), ctypes.byref(out), ctypes.byref(out_len))
            if rc != 0:
                raise MemoryError("native step runner failed to allocate")
            try:
                return ctypes.string_at(out, out_len.value)
            finally:
                self._lib.wb_buf_free(out)

    def blake3(self, data: bytes) -> bytes:
        out = ctypes.create_string_buffer(32)
        self._lib.wb_blake3_hash(data, len(data), out)
        return out.raw

    def crc32(self, data: bytes) -> int:
        return self._lib.wb_crc32_hash(data, len(data))
