"""Shared fixtures: compiled artifacts, the native oracle, and the engine.

Artifacts build once per session into a temp dir; the engine shim
library is built on demand with cargo when missing (first build takes a
few minutes, afterwards it is cached in engine/target/).
"""

from __future__ import annotations

import subprocess
from pathlib import Path

import pytest

from wasmbench.artifacts import STEP_IDS, build_artifacts, wasm_artifact_name
from wasmbench.engine import EngineUnavailable, WasmtimeEngine, default_engine_library, precompile_aot
from wasmbench.oracle import NativeOracle

REPO_ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture(scope="session")
def artifact_dir(tmp_path_factory) -> Path:
    out = tmp_path_factory.mktemp("artifacts")
    build_artifacts(out)
    return out


@pytest.fixture(scope="session")
def oracle(artifact_dir: Path) -> NativeOracle:
    return NativeOracle.from_artifact_dir(artifact_dir)


@pytest.fixture(scope="session")
def host_engine() -> WasmtimeEngine:
    try:
        default_engine_library()
    except EngineUnavailable:
        result = subprocess.run(
            ["cargo", "build", "--release"], cwd=REPO_ROOT / "engine", capture_output=True, text=True
        )
        if result.returncode != 0:
            pytest.fail(f"engine library missing and cargo build failed:\n{result.stderr[-2000:]}")
    return WasmtimeEngine()


@pytest.fixture(scope="session")
def aot_artifact_dir(artifact_dir: Path, host_engine: WasmtimeEngine) -> Path:
    for step in STEP_IDS:
        precompile_aot(artifact_dir / wasm_artifact_name(step), host_engine)
    return artifact_dir
