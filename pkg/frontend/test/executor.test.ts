/**
 * Worker-side executor against the real wasm artifacts: golden digests
 * for the full workflow, cold/warm phase semantics, fault paths.
 */

import { readFile } from "node:fs/promises";
import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { beforeAll, describe, expect, it } from "vitest";

import { StepExecutor, ModuleFetcher } from "../src/executor.js";
import { encodeInvoke, decodeInvoke } from "../src/frames.js";
import { encode } from "../src/cbor.js";
import { generatePayload, hex, runWorkflow } from "./workflow.js";

const here = dirname(fileURLToPath(import.meta.url));
const artifactDir = join(here, "..", ".artifacts");
const goldenPath = join(here, "..", "..", "src", "wasmbench", "data", "golden_digests.json");

const golden: Record<string, string> = JSON.parse(readFileSync(goldenPath, "utf-8"));

const diskFetcher: ModuleFetcher = async (step, _bust) =>
  new Uint8Array(await readFile(join(artifactDir, `step${step}.wasm`)));

describe("step executor", () => {
  it("runs the small workflow to the golden digest (seed 42)", async () => {
    const executor = new StepExecutor(diskFetcher);
    const payload = generatePayload(42n, 16 * 1024);
    const run = await runWorkflow((f) => executor.invoke(f), payload, "warm", "t-small");
    expect(hex(run.digest)).toBe(golden["42/small"]);
  });

  it("runs the medium workflow to the golden digest (seed 42)", async () => {
    const executor = new StepExecutor(diskFetcher);
    const payload = generatePayload(42n, 1024 * 1024);
    const run = await runWorkflow((f) => executor.invoke(f), payload, "warm", "t-medium");
    expect(hex(run.digest)).toBe(golden["42/medium"]);
  });

  it("reports compile = 0 on warm invocations after the first", async () => {
    const executor = new StepExecutor(diskFetcher);
    const payload = generatePayload(42n, 16 * 1024);
    await runWorkflow((f) => executor.invoke(f), payload, "warm", "warmup");
    const second = await runWorkflow((f) => executor.invoke(f), payload, "warm", "measured");
    expect(second.phases.size).toBe(8);
    for (const [stepId, phases] of second.phases) {
      expect(phases.compile, stepId).toBe(0);
      expect(phases.instantiate, stepId).toBe(0);
      expect(phases.execute, stepId).toBeGreaterThanOrEqual(0);
    }
    expect(hex(second.digest)).toBe(golden["42/small"]);
  });

  it("pays compile and instantiate on cold invocations", async () => {
    const executor = new StepExecutor(diskFetcher);
    const body = encode({ v: 1, kind: "u8", payload: new Uint8Array(64) });
    await executor.invoke({ stepId: "S1", runId: "warmup", payload: body, state: "warm" });
    const cold = await executor.invoke({ stepId: "S1", runId: "cold-1", payload: body, state: "cold" });
    expect(cold.status).toBe("ok");
    expect(cold.phases!.compile).toBeGreaterThan(0);
    expect(cold.phases!.instantiate).toBeGreaterThan(0);
  });

  it("re-fetches the module with a cache buster on every cold invocation", async () => {
    const busts: Array<string | null> = [];
    const countingFetcher: ModuleFetcher = async (step, bust) => {
      busts.push(bust);
      return diskFetcher(step, bust);
    };
    const executor = new StepExecutor(countingFetcher);
    const body = encode({ v: 1, kind: "u8", payload: new Uint8Array(8) });
    await executor.invoke({ stepId: "S1", runId: "c1", payload: body, state: "cold" });
    await executor.invoke({ stepId: "S1", runId: "c2", payload: body, state: "cold" });
    await executor.invoke({ stepId: "S1", runId: "w1", payload: body, state: "warm" });
    expect(busts.length).toBe(2); // the warm call reused the live instance
    expect(busts[0]).not.toBeNull();
    expect(busts[1]).not.toBeNull();
    expect(busts[0]).not.toBe(busts[1]);
  });

  it("reports CompileFailed for an invalid module", async () => {
    const executor = new StepExecutor(async () => new Uint8Array([0, 1, 2, 3]));
    const body = encode({ v: 1, kind: "u8", payload: new Uint8Array(8) });
    const result = await executor.invoke({ stepId: "S1", runId: "bad", payload: body, state: "cold" });
    expect(result.status).toBe("error");
    expect(result.error!.code).toBe("CompileFailed");
  });

  it("reports UnknownStep for an out-of-range step id", async () => {
    const executor = new StepExecutor(diskFetcher);
    const result = await executor.invoke({
      stepId: "S9" as never,
      runId: "bad",
      payload: new Uint8Array(0),
    });
    expect(result.status).toBe("error");
    expect(result.error!.code).toBe("UnknownStep");
  });

  it("surfaces guest step errors as ok results with a tagged error body", async () => {
    const executor = new StepExecutor(diskFetcher);
    const body = encode({ v: 1, kind: "u8", payload: new Uint8Array(17) }); // not /4
    const result = await executor.invoke({ stepId: "S2", runId: "err", payload: body, state: "warm" });
    expect(result.status).toBe("ok");
    expect(result.payload![0]).toBe(1); // error tag from the guest
  });

  it("invoke frames survive the wire encoding", () => {
    const frame = {
      stepId: "S3[2]",
      runId: "abc-3-000000000001",
      payload: new Uint8Array([9, 8, 7]),
      state: "cold" as const,
      mode: "jit",
    };
    expect(decodeInvoke(encodeInvoke(frame))).toEqual(frame);
  });
});
