"""Build and pin the step artifacts.

One C source tree builds two ways: five wasm32 guest modules (the
benchmark artifact, one per step) and one native shared library (the
correctness oracle). Builds are deterministic, so the lockfile of
content digests is reproducible from a clean tree.
"""

from __future__ import annotations

import hashlib
import json
import shutil
import subprocess
from pathlib import Path

STEP_IDS = ("S1", "S2", "S3", "S4", "S5")

_CSRC = Path(__file__).parent / "csrc"
_SOURCES = ("wb_arena.c", "wb_blake3.c", "wb_steps.c")

_COMMON_FLAGS = ["-O2", "-ffp-contract=off", "-fno-builtin"]

_WASM_FLAGS = [
    "--target=wasm32",
    "-msimd128",
    "-nostdlib",
    "-Wl,--no-entry",
    "-Wl,--export=__heap_base",
    "-Wl,-z,stack-size=1048576",
]


class BuildFailed(RuntimeError):
    """Compiler or linker failure while producing an artifact."""


def wasm_artifact_name(step: str) -> str:
    return f"step{step[1]}.wasm"


def native_lib_name() -> str:
    return "libwbsteps.so"


def _find_clang(clang: str | None) -> str:
    for candidate in ([clang] if clang else []) + ["clang", "clang-14", "clang-15"]:
        if candidate and shutil.which(candidate):
            return candidate
    raise BuildFailed("no clang compiler found on PATH")


def _run_compiler(cmd: list[str]) -> None:
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        raise BuildFailed(f"{' '.join(cmd)}\n{proc.stderr}")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def source_digest() -> str:
    """Digest of the C sources, for build caching and provenance."""
    h = hashlib.sha256()
    for name in ("wb_common.h",) + _SOURCES:
        h.update(name.encode())
        h.update((_CSRC / name).read_bytes())
    return h.hexdigest()


def build_artifacts(out_dir: Path, clang: str | None = None, force: bool = False) -> dict:
    """Compile wasm guests and the native oracle into ``out_dir``.

    Returns the lockfile dict and writes it to ``out_dir/lockfile.json``.
    Skips compilation when sources are unchanged since the last build.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lock_path = out_dir / "lockfile.json"
    src_digest = source_digest()

    if not force and lock_path.exists():
        lock = json.loads(lock_path.read_text())
        if lock.get("source_digest") == src_digest and all(
            (out_dir / name).exists() for name in lock.get("artifacts", {})
        ):
            return lock

    cc = _find_clang(clang)
    sources = [str(_CSRC / name) for name in _SOURCES]

    artifacts: dict[str, dict] = {}
    for step in STEP_IDS:
        name = wasm_artifact_name(step)
        target = out_dir / name
        cmd = [cc, *_COMMON_FLAGS, *_WASM_FLAGS, f"-DWB_STEP={step[1]}", *sources, "-o", str(target)]
        _run_compiler(cmd)
        artifacts[name] = {"sha256": _sha256(target), "bytes": target.stat().st_size}

    native = out_dir / native_lib_name()
    _run_compiler([cc, *_COMMON_FLAGS, "-fPIC", "-shared", *sources, "-o", str(native)])
    artifacts[native_lib_name()] = {"sha256": _sha256(native), "bytes": native.stat().st_size}

    lock = {
        "source_digest": src_digest,
        "compiler": cc,
        "artifacts": artifacts,
    }
    lock_path.write_text(json.dumps(lock, indent=2, sort_keys=True) + "\n")
    return lock


def lockfile_digest(lock: dict) -> str:
    """Stable digest over a lockfile dict, embedded in reports for provenance."""
    return hashlib.sha256(json.dumps(lock, sort_keys=True).encode()).hexdigest()
