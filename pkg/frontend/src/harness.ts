/**
 * Harness session: bridges the orchestrator's loopback socket to the
 * worker, forwarding binary frames verbatim in both directions.
 *
 * Messages are processed strictly in order (the orchestrator keeps one
 * request in flight). Besides invoke frames, the socket carries three
 * control ops: ping -> pong (liveness), reset -> reset_done (discard
 * the worker and its caches so the next invocations start cold). A
 * malformed frame yields an error result and the session stays alive.
 */

import { controlOp, encodeControl, encodeResult } from "./frames.js";

export interface WorkerLike {
  postMessage(data: ArrayBuffer, transfer: ArrayBuffer[]): void;
  onMessage(handler: (data: ArrayBuffer) => void): void;
  onError(handler: (err: unknown) => void): void;
  terminate(): void | Promise<void>;
}

export interface SocketLike {
  send(data: Uint8Array): void;
  onMessage(handler: (data: ArrayBuffer) => void): void;
  onClose(handler: () => void): void;
  close(): void;
}

export interface HarnessStatus {
  connected: boolean;
  runsCompleted: number;
  workerGeneration: number;
  lastError: string | null;
}

export class Harness {
  private worker: WorkerLike | null = null;
  private queue: ArrayBuffer[] = [];
  private busy = false;
  private awaitingReply: ((data: ArrayBuffer) => void) | null = null;
  readonly status: HarnessStatus = {
    connected: false,
    runsCompleted: 0,
    workerGeneration: 0,
    lastError: null,
  };

  constructor(
    private socket: SocketLike,
    private createWorker: () => WorkerLike,
    private onStatus: (status: HarnessStatus) => void = () => {},
  ) {}

  start(): void {
    this.status.connected = true;
    this.socket.onMessage((data) => {
      this.queue.push(data);
      void this.pump();
    });
    this.socket.onClose(() => {
      this.status.connected = false;
      this.onStatus(this.status);
    });
    this.ensureWorker();
    this.onStatus(this.status);
  }

  private ensureWorker(): WorkerLike {
    if (this.worker === null) {
      const worker = this.createWorker();
      worker.onMessage((data) => {
        const pending = this.awaitingReply;
        this.awaitingReply = null;
        if (pending) pending(data);
      });
      worker.onError((err) => {
        this.status.lastError = String(err);
        const pending = this.awaitingReply;
        this.awaitingReply = null;
        if (pending) {
          pending(
            encodeResult({
              status: "error",
              error: { code: "WorkerCrashed", msg: String(err) },
            }).buffer as ArrayBuffer,
          );
        }
        void this.recycleWorker();
      });
      this.worker = worker;
      this.status.workerGeneration += 1;
    }
    return this.worker;
  }

  private async recycleWorker(): Promise<void> {
    if (this.worker !== null) {
      await this.worker.terminate();
      this.worker = null;
    }
    this.ensureWorker();
    this.onStatus(this.status);
  }

  private async pump(): Promise<void> {
    if (this.busy) return;
    this.busy = true;
    try {
      while (this.queue.length > 0) {
        const message = this.queue.shift()!;
        await this.handle(message);
      }
    } finally {
      this.busy = false;
    }
  }

  private async handle(message: ArrayBuffer): Promise<void> {
    const bytes = new Uint8Array(message);
    const op = controlOp(bytes);
    if (op === "ping") {
      this.socket.send(encodeControl("pong"));
      return;
    }
    if (op === "reset") {
      await this.recycleWorker(); // fresh worker: next invocations are cold
      this.socket.send(encodeControl("reset_done"));
      return;
    }
    if (op !== "invoke") {
      this.socket.send(
        encodeResult({
          status: "error",
          error: { code: "MalformedFrame", msg: `unsupported frame (op=${op})` },
        }),
      );
      return;
    }
    const reply = await this.dispatchToWorker(message);
    this.socket.send(new Uint8Array(reply));
    this.status.runsCompleted += 1;
    this.onStatus(this.status);
  }

  private dispatchToWorker(message: ArrayBuffer): Promise<ArrayBuffer> {
    const worker = this.ensureWorker();
    return new Promise((resolve) => {
      this.awaitingReply = resolve;
      worker.postMessage(message, [message]); // transferred, not copied
    });
  }
}
