/**
 * Acceptance criteria owned by the harness, one test per criterion;
 * each prints an `ACCEPTANCE <n> ...: PASS` line (run vitest with
 * --reporter=verbose or check stdout).
 */

import { createHash } from "node:crypto";
import { once } from "node:events";
import { readFileSync } from "node:fs";
import { readFile } from "node:fs/promises";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { Worker } from "node:worker_threads";

import { WebSocket, WebSocketServer } from "ws";
import { describe, expect, it } from "vitest";

import { encode } from "../src/cbor.js";
import { decodeResult, encodeInvoke, InvokeFrame } from "../src/frames.js";
import { Harness, SocketLike, WorkerLike } from "../src/harness.js";
import { StepExecutor, ModuleFetcher } from "../src/executor.js";
import { generatePayload, hex, parseStepReply, runWorkflow } from "./workflow.js";

const here = dirname(fileURLToPath(import.meta.url));
const artifactDir = join(here, "..", ".artifacts");
const workerPath = join(here, "..", "dist", "worker.js");
const golden: Record<string, string> = JSON.parse(
  readFileSync(join(here, "..", "..", "src", "wasmbench", "data", "golden_digests.json"), "utf-8"),
);

const diskFetcher: ModuleFetcher = async (step) =>
  new Uint8Array(await readFile(join(artifactDir, `step${step}.wasm`)));

describe("secondary acceptance", () => {
  it("criterion 12: golden digests for seed 42 small+medium, warm compile = 0", async () => {
    const executor = new StepExecutor(diskFetcher);
    const invoke = (f: InvokeFrame) => executor.invoke(f);

    for (const [label, bytes] of [
      ["small", 16 * 1024],
      ["medium", 1024 * 1024],
    ] as const) {
      const payload = generatePayload(42n, bytes);
      await runWorkflow(invoke, payload, "warm", `warmup-${label}`);
      const measured = await runWorkflow(invoke, payload, "warm", `measured-${label}`);
      expect(hex(measured.digest)).toBe(golden[`42/${label}`]);
      for (const [stepId, phases] of measured.phases) {
        expect(phases.compile, `${label} ${stepId}`).toBe(0);
      }
    }
    console.log("\nACCEPTANCE 12 browser-harness golden digests (small+medium, warm): PASS");
  });

  it("criterion 13: 4 MiB payload survives the whole bridge unchanged", async () => {
    const server = new WebSocketServer({ host: "127.0.0.1", port: 0 });
    await once(server, "listening");
    const port = (server.address() as { port: number }).port;

    const sessionReady = new Promise<WebSocket>((resolve) =>
      server.on("connection", (ws) => resolve(ws)),
    );
    const client = new WebSocket(`ws://127.0.0.1:${port}`);
    await once(client, "open");

    const workerFactory = (): WorkerLike => {
      const worker = new Worker(workerPath, { workerData: { artifactDir } });
      return {
        postMessage: (data, transfer) => worker.postMessage(data, transfer),
        onMessage: (handler) => worker.on("message", (d: ArrayBuffer) => handler(d)),
        onError: (handler) => worker.on("error", handler),
        terminate: async () => {
          await worker.terminate();
        },
      };
    };
    client.binaryType = "arraybuffer";
    const socket: SocketLike = {
      send: (data) => client.send(data),
      onMessage: (handler) =>
        client.on("message", (data) => {
          const buf = data as Buffer;
          handler(
            data instanceof ArrayBuffer
              ? data
              : (buf.buffer.slice(buf.byteOffset, buf.byteOffset + buf.byteLength) as ArrayBuffer),
          );
        }),
      onClose: (handler) => client.on("close", handler),
      close: () => client.close(),
    };
    new Harness(socket, workerFactory).start();
    const session = await sessionReady;

    const payload = generatePayload(1234n, 4 * 1024 * 1024);
    const sentDigest = createHash("sha256").update(payload).digest("hex");
    const frame: InvokeFrame = {
      stepId: "S1",
      runId: "acceptance-13",
      payload: encode({ v: 1, kind: "u8", payload }),
      state: "warm",
    };
    const replyBytes = new Promise<Uint8Array>((resolve) =>
      session.once("message", (data) => {
        const buf = data as Buffer;
        resolve(new Uint8Array(buf.buffer.slice(buf.byteOffset, buf.byteOffset + buf.byteLength)));
      }),
    );
    session.send(encodeInvoke(frame));
    const result = decodeResult(await replyBytes);
    expect(result.status).toBe("ok");
    const echoed = parseStepReply(result.payload!)["payload"] as Uint8Array;
    expect(createHash("sha256").update(echoed).digest("hex")).toBe(sentDigest);

    client.close();
    server.close();
    console.log("\nACCEPTANCE 13 bridge losslessness (4 MiB, digest check): PASS");
  });
});
