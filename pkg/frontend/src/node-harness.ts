/**
 * Headless harness runner: the same session logic as the browser page,
 * but driven by a Node worker thread and a ws client. Lets operators
 * and integration tests exercise the orchestrator's bridge without a
 * browser.
 *
 * Usage: node dist/node-harness.js <bridge-url> <artifact-dir>
 */

import { Worker } from "node:worker_threads";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { WebSocket } from "ws";

import { Harness, SocketLike, WorkerLike } from "./harness.js";

const here = dirname(fileURLToPath(import.meta.url));

export function nodeWorkerFactory(artifactDir: string): () => WorkerLike {
  return () => {
    const worker = new Worker(join(here, "worker.js"), { workerData: { artifactDir } });
    return {
      postMessage: (data, transfer) => worker.postMessage(data, transfer),
      onMessage: (handler) => worker.on("message", (data: ArrayBuffer) => handler(data)),
      onError: (handler) => worker.on("error", handler),
      terminate: async () => {
        await worker.terminate();
      },
    };
  };
}

export function wsSocket(ws: WebSocket): SocketLike {
  ws.binaryType = "arraybuffer";
  return {
    send: (data) => ws.send(data),
    onMessage: (handler) => ws.on("message", (data) => handler(toArrayBuffer(data))),
    onClose: (handler) => ws.on("close", handler),
    close: () => ws.close(),
  };
}

function toArrayBuffer(data: unknown): ArrayBuffer {
  if (data instanceof ArrayBuffer) return data;
  const buf = data as Buffer;
  return buf.buffer.slice(buf.byteOffset, buf.byteOffset + buf.byteLength) as ArrayBuffer;
}

const invokedDirectly =
  typeof process !== "undefined" && process.argv[1]?.endsWith("node-harness.js");

if (invokedDirectly) {
  const [bridgeUrl, artifactDir] = process.argv.slice(2);
  if (!bridgeUrl || !artifactDir) {
    console.error("usage: node node-harness.js <bridge-url> <artifact-dir>");
    process.exit(1);
  }
  const ws = new WebSocket(bridgeUrl);
  ws.on("open", () => {
    const harness = new Harness(wsSocket(ws), nodeWorkerFactory(artifactDir), (status) => {
      console.error(
        `bridge=${status.connected ? "up" : "down"} runs=${status.runsCompleted} ` +
          `worker_gen=${status.workerGeneration}`,
      );
    });
    harness.start();
  });
  ws.on("close", () => process.exit(0));
  ws.on("error", (err) => {
    console.error(`bridge connect failed: ${err.message}`);
    process.exit(2);
  });
}
