/**
 * In-memory step executor for the worker thread.
 *
 * Guest ABI (same as the other backends): exported linear `memory`, an
 * exported `__heap_base` global, and `run(ptr, len) -> i64` packing
 * (out_ptr << 32 | out_len) of a tag-prefixed reply left in memory.
 *
 * Cold invocations fetch (with a cache-busting name), compile,
 * instantiate and initialize before executing; warm invocations reuse
 * the live instance, so every phase but execute reports zero. All
 * timings come from the page's monotonic high-resolution clock.
 */

import { InvokeFrame, PhaseBreakdown, ResultFrame, stepNumber, zeroPhases } from "./frames.js";

export type ModuleFetcher = (step: number, cacheBust: string | null) => Promise<Uint8Array>;

interface LiveInstance {
  instance: WebAssembly.Instance;
  run: (ptr: number, len: number) => bigint;
  memory: WebAssembly.Memory;
  heapBase: number;
}

const nowUs = (): number => Math.round(performance.now() * 1000);

/**
 * Interfaces exposed to guests that import the system-interface subset:
 * a monotonic clock, a switched-off random source, and muted stdio.
 * The workflow modules import nothing, but the shim keeps the harness
 * compatible with toolchains that emit these imports.
 */
export function wasiShimImports(memory?: () => WebAssembly.Memory): WebAssembly.Imports {
  return {
    wasi_snapshot_preview1: {
      clock_time_get: (_id: number, _precision: bigint, _outPtr: number): number => 0,
      random_get: (_ptr: number, _len: number): number => 0, // deterministic: left zeroed
      fd_write: (_fd: number, _iovs: number, _len: number, _outPtr: number): number => 0,
      fd_close: (_fd: number): number => 0,
      fd_seek: (): number => 0,
      proc_exit: (code: number): void => {
        throw new Error(`guest called proc_exit(${code})`);
      },
      environ_get: (): number => 0,
      environ_sizes_get: (): number => 0,
    },
  };
}

export class StepExecutor {
  private instances = new Map<number, LiveInstance>();
  private coldCounter = 0;

  constructor(private fetchModule: ModuleFetcher) {}

  /** Execute one invocation; never throws, faults become error frames. */
  async invoke(frame: InvokeFrame): Promise<ResultFrame> {
    const t0 = nowUs();
    let step: number;
    try {
      step = stepNumber(frame.stepId);
    } catch (err) {
      return { status: "error", error: { code: "UnknownStep", msg: String(err) } };
    }
    const state = frame.state ?? "warm";
    const phases = zeroPhases();

    let live = state === "warm" ? this.instances.get(step) : undefined;
    if (state === "cold") {
      // a fresh instance with caches bypassed; any previous one is dropped
      this.instances.delete(step);
      live = undefined;
    }
    if (live === undefined) {
      try {
        live = await this.buildInstance(step, state === "cold", phases);
      } catch (err) {
        const code = err instanceof WebAssembly.CompileError ? "CompileFailed" : "WorkerCrashed";
        return { status: "error", error: { code, msg: String(err) } };
      }
      this.instances.set(step, live);
    }

    const execStart = nowUs();
    let reply: Uint8Array;
    try {
      reply = this.callRun(live, frame.payload);
    } catch (err) {
      this.instances.delete(step); // a faulted instance is never reused
      return { status: "error", error: { code: "WorkerCrashed", msg: String(err) } };
    }
    phases.execute = nowUs() - execStart;
    return { status: "ok", payload: reply, phases, totalUs: nowUs() - t0 };
  }

  /** Drop all live instances; subsequent invocations start cold. */
  reset(): void {
    this.instances.clear();
  }

  private async buildInstance(
    step: number,
    bustCache: boolean,
    phases: PhaseBreakdown,
  ): Promise<LiveInstance> {
    const tLoad = nowUs();
    const bust = bustCache ? `cold-${Date.now()}-${this.coldCounter++}` : null;
    const bytes = await this.fetchModule(step, bust);
    const tCompile = nowUs();
    const module = await WebAssembly.compile(toArrayBufferCopy(bytes));
    const tInstantiate = nowUs();
    const instance = await WebAssembly.instantiate(module, wasiShimImports());
    const tInit = nowUs();
    const exports = instance.exports;
    const run = exports["run"] as (ptr: number, len: number) => bigint;
    const memory = exports["memory"] as WebAssembly.Memory;
    const heapBaseGlobal = exports["__heap_base"] as WebAssembly.Global;
    if (typeof run !== "function" || !(memory instanceof WebAssembly.Memory) || !heapBaseGlobal) {
      throw new Error("module missing run/memory/__heap_base exports");
    }
    const maybeInit = exports["_initialize"];
    if (typeof maybeInit === "function") (maybeInit as () => void)();
    const tDone = nowUs();
    phases.load = tCompile - tLoad;
    phases.compile = tInstantiate - tCompile;
    phases.instantiate = tInit - tInstantiate;
    phases.init = tDone - tInit;
    return { instance, run, memory, heapBase: heapBaseGlobal.value as number };
  }

  private callRun(live: LiveInstance, input: Uint8Array): Uint8Array {
    const needed = live.heapBase + input.length;
    const have = live.memory.buffer.byteLength;
    if (needed > have) {
      live.memory.grow(Math.ceil((needed - have) / 65536));
    }
    new Uint8Array(live.memory.buffer, live.heapBase, input.length).set(input);
    const packed = live.run(live.heapBase, input.length);
    const ptr = Number(packed >> 32n);
    const len = Number(packed & 0xffffffffn);
    // memory may have grown during the call: re-read the buffer
    const data = new Uint8Array(live.memory.buffer);
    if (ptr + len > data.length) throw new Error("guest returned out-of-bounds buffer");
    return data.slice(ptr, ptr + len);
  }
}

function toArrayBufferCopy(bytes: Uint8Array): ArrayBuffer {
  const out = new ArrayBuffer(bytes.byteLength);
  new Uint8Array(out).set(bytes);
  return out;
}
