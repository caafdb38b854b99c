#!/usr/bin/env python3
"""Walk the five workflow steps one by one through the native oracle.

Builds the artifacts on first run, generates a deterministic payload,
and prints what each step does to it, ending with the final digest that
every backend must reproduce.

    python3 demos/01_payloads_and_steps.py
"""

from pathlib import Path

import numpy as np

from wasmbench import steps
from wasmbench.artifacts import build_artifacts
from wasmbench.oracle import NativeOracle
from wasmbench.payloads import SMALL, PayloadSpec, generate
from wasmbench.steps import d_of, strip_bounds


def main() -> None:
    artifact_dir = Path("artifacts")
    build_artifacts(artifact_dir)
    oracle = NativeOracle.from_artifact_dir(artifact_dir)

    spec = PayloadSpec(seed=42, size_class=SMALL)
    payload = generate(spec)
    d = d_of(SMALL)
    print(f"payload: seed={spec.seed} class={SMALL.label} ({len(payload)} bytes), matmul d={d}")

    r1 = steps.parse_result(oracle.run_step(1, steps.make_data_frame(payload)))
    print(f"S1 ingest:     crc32=0x{r1['crc']:08x}, payload echoed ({len(r1['payload'])} B)")

    r1_bytes = oracle.run_step(1, steps.make_data_frame(payload))[1:]
    r2 = steps.parse_result(oracle.run_step(2, r1_bytes))
    values = np.frombuffer(r2["payload"], dtype="<f4")
    print(f"S2 preprocess: {values.size} f32 values in [{values.min():.3f}, {values.max():.3f}]")

    matrix = r2["payload"]
    block_frames = []
    for branch in range(4):
        lo, hi = strip_bounds(d, branch)
        reply = oracle.run_step(3, steps.make_block_frame(matrix, d, lo, hi))
        steps.parse_result(reply)
        block_frames.append(reply[1:])
        print(f"S3[{branch}] map:     rows {lo}..{hi} of C = A x A")

    r4_reply = oracle.run_step(4, steps.make_fanin_frame(block_frames))
    r4 = steps.parse_result(r4_reply)
    print(f"S4 reduce:     assembled {len(r4['payload'])} B, partial digest {r4['digest'].hex()[:16]}...")

    r5 = steps.parse_result(oracle.run_step(5, steps.make_finalize_frame(r4["payload"])))
    print(f"S5 finalize:   final digest {r5['digest'].hex()}")

    pipeline = steps.run_pipeline(oracle.run_step, payload, SMALL)
    assert pipeline.digest == r5["digest"]
    print("pipeline driver reproduces the same digest: ok")


if __name__ == "__main__":
    main()
