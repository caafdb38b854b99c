#!/usr/bin/env python3
"""Run a miniature measurement campaign against a local executor.

Starts the HTTP shim in-process, runs jit/aot x cold/warm cells with a
few repetitions, and prints the per-cell startup and makespan summaries
the full harness would put into the report bundle.

    python3 demos/02_local_campaign.py
"""

import tempfile
from pathlib import Path

from wasmbench import golden
from wasmbench.artifacts import STEP_IDS, build_artifacts, wasm_artifact_name
from wasmbench.engine import WasmtimeEngine, precompile_aot
from wasmbench.orchestrator import Cell, RunPlan, run_plan
from wasmbench.reports import build_reports
from wasmbench.shim import ExecutorConfig, ExecutorServer
from wasmbench.transports import HttpTransport


def main() -> None:
    artifact_dir = Path("artifacts")
    build_artifacts(artifact_dir)
    engine = WasmtimeEngine()
    for step in STEP_IDS:
        precompile_aot(artifact_dir / wasm_artifact_name(step), engine)

    server = ExecutorServer(
        ExecutorConfig(artifact_dir=artifact_dir, pool_size=4), host_engine=engine, port=0
    ).start()
    transport = HttpTransport(server.address)
    print(f"executor: {server.address} ({engine.name})")

    plan = RunPlan(
        cells=[
            Cell("local", "small", mode, state)
            for mode in ("jit", "aot")
            for state in ("cold", "warm")
        ],
        repetitions_k=5,
        order_seed=7,
        warmup_runs=1,
    )
    outcome = run_plan(
        plan,
        {"local": transport},
        golden_lookup=lambda seed, sc: golden.lookup(seed, sc),
        progress=lambda msg: print(f"  {msg}"),
    )

    bundle = build_reports(outcome.records, artifact_sizes=None)
    print(f"\n{'cell':<24}{'startup med (us)':>18}{'makespan med (us)':>20}")
    for cell, summary in sorted(bundle.summaries["cells"].items()):
        startup = summary["startup_us"]["startup_total"]["median"]
        makespan = summary["makespan_us"]["median"]
        print(f"{cell:<24}{startup:>18.0f}{makespan:>20.0f}")

    with tempfile.TemporaryDirectory() as tmp:
        for path in bundle.write(Path(tmp)):
            print(f"wrote {path.name}")

    transport.close()
    server.stop()


if __name__ == "__main__":
    main()
