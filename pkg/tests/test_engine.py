"""The embedded engine behind the host-engine interface."""

import shutil
import subprocess
from pathlib import Path

import pytest

from wasmbench import steps
from wasmbench.artifacts import wasm_artifact_name
from wasmbench.engine import (
    ExecutionTimeout,
    InvalidModule,
    StepTrap,
    precompile_aot,
)
from wasmbench.payloads import SMALL, PayloadSpec, generate


@pytest.fixture(scope="module")
def s1_wasm(artifact_dir):
    return (artifact_dir / wasm_artifact_name("S1")).read_bytes()


def test_jit_compile_and_run(host_engine, s1_wasm, oracle):
    module = host_engine.compile(s1_wasm)
    instance = host_engine.instantiate(module)
    host_engine.initialize(instance)
    frame = steps.make_data_frame(b"123456789")
    reply = host_engine.call(instance, frame, timeout_ms=30_000)
    assert reply == oracle.run_step(1, frame)
    host_engine.free_instance(instance)
    host_engine.free_module(module)


def test_compile_rejects_garbage(host_engine):
    with pytest.raises(InvalidModule):
        host_engine.compile(b"\x00asm but not really")


def test_deserialize_rejects_garbage(host_engine):
    with pytest.raises(InvalidModule):
        host_engine.load_precompiled(b"not a precompiled object")


def test_precompile_aot_idempotent(artifact_dir, host_engine):
    wasm = artifact_dir / wasm_artifact_name("S1")
    out1 = precompile_aot(wasm, host_engine)
    assert out1.exists() and out1.suffix == ".cwasm"
    mtime = out1.stat().st_mtime_ns
    out2 = precompile_aot(wasm, host_engine)  # cache hit: file untouched
    assert out2 == out1
    assert out2.stat().st_mtime_ns == mtime


def test_precompile_missing_artifact(host_engine, tmp_path):
    with pytest.raises(InvalidModule):
        precompile_aot(tmp_path / "nope.wasm", host_engine)


def test_aot_object_runs_and_matches_jit(artifact_dir, host_engine, oracle):
    wasm_path = artifact_dir / wasm_artifact_name("S2")
    aot_path = precompile_aot(wasm_path, host_engine)
    module = host_engine.load_precompiled(aot_path.read_bytes())
    instance = host_engine.instantiate(module)
    payload = generate(PayloadSpec(42, SMALL))
    frame = steps.make_data_frame(payload)
    reply = host_engine.call(instance, frame, timeout_ms=60_000)
    assert reply == oracle.run_step(2, frame)  # mode must not change results
    host_engine.free_instance(instance)
    host_engine.free_module(module)


def test_large_frame_roundtrip_through_linear_memory(host_engine, s1_wasm):
    module = host_engine.compile(s1_wasm)
    instance = host_engine.instantiate(module)
    payload = generate(PayloadSpec(9, SMALL)) * 256  # 4 MiB
    reply = host_engine.call(instance, steps.make_data_frame(payload), timeout_ms=60_000)
    assert steps.parse_result(reply)["payload"] == payload
    host_engine.free_instance(instance)
    host_engine.free_module(module)


@pytest.fixture(scope="module")
def looping_wasm(tmp_path_factory) -> bytes:
    """A guest whose run() never returns, for deadline tests."""
    src = tmp_path_factory.mktemp("loop") / "loop.c"
    src.write_text(
        "__attribute__((export_name(\"run\")))\n"
        "unsigned long long run(unsigned p, unsigned l) {\n"
        "    volatile unsigned x = 1;\n"
        "    while (x) {}\n"
        "    return 0;\n"
        "}\n"
    )
    out = src.with_suffix(".wasm")
    cc = shutil.which("clang") or shutil.which("clang-14")
    subprocess.run(
        [cc, "--target=wasm32", "-O1", "-nostdlib", "-Wl,--no-entry",
         "-Wl,--export=__heap_base", str(src), "-o", str(out)],
        check=True,
    )
    return out.read_bytes()


def test_call_timeout_interrupts_guest(host_engine, looping_wasm):
    module = host_engine.compile(looping_wasm)
    instance = host_engine.instantiate(module)
    with pytest.raises(ExecutionTimeout):
        host_engine.call(instance, b"x", timeout_ms=200)
    host_engine.free_instance(instance)
    host_engine.free_module(module)


def test_every_step_output_matches_native_build(artifact_dir, host_engine, oracle):
    """Same sources, two builds: byte-identical step outputs end to end."""
    from wasmbench.payloads import PayloadSpec, SMALL, generate
    from wasmbench.steps import run_pipeline

    instances = {}
    handles = []
    for step in range(1, 6):
        module = host_engine.compile((artifact_dir / f"step{step}.wasm").read_bytes())
        instance = host_engine.instantiate(module)
        instances[step] = instance
        handles.append((module, instance))
    try:
        payload = generate(PayloadSpec(42, SMALL))
        wasm_run = run_pipeline(
            lambda s, f: host_engine.call(instances[s], f, 120_000), payload, SMALL
        )
        native_run = run_pipeline(oracle.run_step, payload, SMALL)
        assert wasm_run.digest == native_run.digest
        assert wasm_run.step_outputs.keys() == native_run.step_outputs.keys()
        for label, wasm_bytes in wasm_run.step_outputs.items():
            assert wasm_bytes == native_run.step_outputs[label], label
    finally:
        for module, instance in handles:
            host_engine.free_instance(instance)
            host_engine.free_module(module)


def test_instance_isolation(host_engine, s1_wasm):
    """Two instances of one module have independent memories."""
    module = host_engine.compile(s1_wasm)
    a = host_engine.instantiate(module)
    b = host_engine.instantiate(module)
    fa = steps.make_data_frame(b"a" * 100)
    fb = steps.make_data_frame(b"b" * 100)
    ra = host_engine.call(a, fa, timeout_ms=10_000)
    rb = host_engine.call(b, fb, timeout_ms=10_000)
    assert steps.parse_result(ra)["payload"] == b"a" * 100
    assert steps.parse_result(rb)["payload"] == b"b" * 100
    for handle in (a, b):
        host_engine.free_instance(handle)
    host_engine.free_module(module)
