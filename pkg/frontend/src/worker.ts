/**
 * Worker entry: executes workflow steps fully in memory.
 *
 * The page forwards invoke frames as transferable binary buffers; the
 * worker decodes, runs the step module, and transfers the encoded
 * result frame back. Runs both as a browser Web Worker (modules fetched
 * over HTTP from the artifact server) and as a Node worker thread
 * (modules read from an artifact directory given in workerData).
 */

import { StepExecutor, ModuleFetcher } from "./executor.js";
import { decodeInvoke, encodeResult, FrameError, ResultFrame } from "./frames.js";

function browserFetcher(artifactBase: string): ModuleFetcher {
  return async (step, cacheBust) => {
    const suffix = cacheBust === null ? "" : `?bust=${encodeURIComponent(cacheBust)}`;
    const response = await fetch(`${artifactBase}/step${step}.wasm${suffix}`, {
      cache: cacheBust === null ? "default" : "no-store",
    });
    if (!response.ok) throw new Error(`fetch step${step}.wasm: HTTP ${response.status}`);
    return new Uint8Array(await response.arrayBuffer());
  };
}

async function handle(executor: StepExecutor, data: ArrayBuffer): Promise<Uint8Array> {
  let result: ResultFrame;
  try {
    const frame = decodeInvoke(new Uint8Array(data));
    result = await executor.invoke(frame);
  } catch (err) {
    const code = err instanceof FrameError ? "MalformedFrame" : "WorkerCrashed";
    result = { status: "error", error: { code, msg: String(err) } };
  }
  return encodeResult(result);
}

const isNode =
  typeof process !== "undefined" && typeof (process as { versions?: { node?: string } }).versions?.node === "string";

if (isNode) {
  const { parentPort, workerData } = await import("node:worker_threads");
  const { readFile } = await import("node:fs/promises");
  const { join } = await import("node:path");
  const dir = (workerData as { artifactDir: string }).artifactDir;
  const fetcher: ModuleFetcher = async (step, _bust) =>
    new Uint8Array(await readFile(join(dir, `step${step}.wasm`)));
  const executor = new StepExecutor(fetcher);
  parentPort!.on("message", (data: ArrayBuffer) => {
    void handle(executor, data).then((reply) => {
      const buf = reply.buffer as ArrayBuffer;
      parentPort!.postMessage(buf, [buf]);
    });
  });
} else {
  const scope = self as unknown as {
    location: { search: string };
    onmessage: ((event: MessageEvent) => void) | null;
    postMessage(data: ArrayBuffer, transfer: ArrayBuffer[]): void;
  };
  const params = new URLSearchParams(scope.location.search);
  const executor = new StepExecutor(browserFetcher(params.get("artifacts") ?? "/artifacts"));
  scope.onmessage = (event: MessageEvent) => {
    void handle(executor, event.data as ArrayBuffer).then((reply) => {
      const buf = reply.buffer as ArrayBuffer;
      scope.postMessage(buf, [buf]);
    });
  };
}
