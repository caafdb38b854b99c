/**
 * Page entry: connect the native WebSocket and a module Web Worker to
 * the harness, with a minimal status readout (diagnostics only).
 *
 * Query parameters:
 *   ?bridge=ws://127.0.0.1:8787   orchestrator bridge socket
 *   &artifacts=/artifacts         base path of the step modules
 */

import { Harness, SocketLike, WorkerLike } from "./harness.js";

function browserWorker(artifacts: string): WorkerLike {
  const worker = new Worker(`./worker.js?artifacts=${encodeURIComponent(artifacts)}`, {
    type: "module",
  });
  return {
    postMessage: (data, transfer) => worker.postMessage(data, transfer),
    onMessage: (handler) => {
      worker.onmessage = (event) => handler(event.data as ArrayBuffer);
    },
    onError: (handler) => {
      worker.onerror = (event) => handler(event.message ?? "worker error");
    },
    terminate: () => worker.terminate(),
  };
}

function browserSocket(url: string): SocketLike {
  const ws = new WebSocket(url);
  ws.binaryType = "arraybuffer";
  return {
    send: (data) => ws.send(data),
    onMessage: (handler) => {
      ws.onmessage = (event) => handler(event.data as ArrayBuffer);
    },
    onClose: (handler) => {
      ws.onclose = () => handler();
    },
    close: () => ws.close(),
  };
}

function main(): void {
  const params = new URLSearchParams(location.search);
  const bridgeUrl = params.get("bridge") ?? "ws://127.0.0.1:8787";
  const artifacts = params.get("artifacts") ?? "/artifacts";
  const statusEl = document.getElementById("status")!;
  const socket = browserSocket(bridgeUrl);
  const harness = new Harness(socket, () => browserWorker(artifacts), (status) => {
    statusEl.textContent =
      `bridge: ${status.connected ? "connected" : "disconnected"} | ` +
      `runs: ${status.runsCompleted} | worker gen: ${status.workerGeneration}` +
      (status.lastError ? ` | last error: ${status.lastError}` : "");
  });
  harness.start();
}

main();
