/**
 * Test-side mini orchestrator: builds the step frames, walks the DAG
 * through any invoke function, and returns the final digest. Payloads
 * reproduce the deterministic generator (splitmix64, 8 bytes LE per
 * counter) so golden digests line up with the other backends.
 */

import { CborValue, decode, encode } from "../src/cbor.js";
import { InvokeFrame, ResultFrame, StepState } from "../src/frames.js";

export type Invoke = (frame: InvokeFrame) => Promise<ResultFrame>;

const MASK64 = (1n << 64n) - 1n;

export function generatePayload(seed: bigint, bytes: number): Uint8Array {
  const out = new Uint8Array(bytes);
  const view = new DataView(out.buffer);
  const blocks = Math.ceil(bytes / 8);
  let x = seed & MASK64;
  for (let i = 0; i < blocks; i++) {
    x = (x + 0x9e3779b97f4a7c15n) & MASK64;
    let z = x;
    z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & MASK64;
    z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & MASK64;
    z = z ^ (z >> 31n);
    if ((i + 1) * 8 <= bytes) view.setBigUint64(i * 8, z, true);
    else {
      for (let b = 0; i * 8 + b < bytes; b++) out[i * 8 + b] = Number((z >> BigInt(8 * b)) & 0xffn);
    }
  }
  return out;
}

export function parseStepReply(tagged: Uint8Array): { [key: string]: CborValue } {
  if (tagged.length === 0) throw new Error("empty step reply");
  const body = decode(tagged.subarray(1)) as { [key: string]: CborValue };
  if (tagged[0] !== 0) {
    throw new Error(`step error ${String(body["code"])}: ${String(body["msg"])}`);
  }
  return body;
}

export interface WorkflowRun {
  digest: Uint8Array;
  /** phase breakdown per step id, in dispatch order */
  phases: Map<string, NonNullable<ResultFrame["phases"]>>;
}

export async function runWorkflow(
  invoke: Invoke,
  payload: Uint8Array,
  state: StepState,
  runId: string,
): Promise<WorkflowRun> {
  const phases = new Map<string, NonNullable<ResultFrame["phases"]>>();

  async function step(stepId: string, body: Uint8Array): Promise<Uint8Array> {
    const result = await invoke({ stepId, runId, payload: body, state, mode: "jit" });
    if (result.status !== "ok" || result.payload === undefined) {
      throw new Error(`${stepId} failed: ${result.error?.code}: ${result.error?.msg}`);
    }
    if (result.phases) phases.set(stepId, result.phases);
    return result.payload;
  }

  const r1 = await step("S1", encode({ v: 1, kind: "u8", payload }));
  parseStepReply(r1);
  const r2 = await step("S2", r1.subarray(1));
  const matrix = parseStepReply(r2)["payload"] as Uint8Array;
  const d = Math.round(Math.sqrt(matrix.length / 4));
  if (d * d * 4 !== matrix.length) throw new Error(`bad matrix size ${matrix.length}`);

  const rows = d / 4;
  const blockReplies: Uint8Array[] = [];
  for (let branch = 0; branch < 4; branch++) {
    const frame = encode({
      v: 1,
      kind: "f32",
      d,
      rows_from: branch * rows,
      rows_to: branch === 3 ? d : (branch + 1) * rows,
      payload: matrix,
    });
    const reply = await step(`S3[${branch}]`, frame);
    parseStepReply(reply);
    blockReplies.push(reply.subarray(1));
  }

  const r4 = await step("S4", encode({ v: 1, blocks: blockReplies }));
  const reduced = parseStepReply(r4)["payload"] as Uint8Array;
  const r5 = await step("S5", encode({ v: 1, kind: "f32", payload: reduced }));
  const digest = parseStepReply(r5)["digest"] as Uint8Array;
  return { digest, phases };
}

export function hex(bytes: Uint8Array): string {
  return Array.from(bytes, (b) => b.toString(16).padStart(2, "0")).join("");
}
