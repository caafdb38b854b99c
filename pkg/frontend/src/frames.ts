/**
 * Invocation frames over the CBOR wire format. Field names and
 * semantics mirror the executor's: requests carry op/step_id/run_id/
 * payload plus optional "mode"/"state" extras; responses carry
 * op/status/payload[/error] plus the phase breakdown.
 */

import { CborValue, decode, encode } from "./cbor.js";

export type StepState = "cold" | "warm";

export interface PhaseBreakdown {
  load: number;
  compile: number;
  instantiate: number;
  init: number;
  execute: number;
}

export interface InvokeFrame {
  stepId: string;
  runId: string;
  payload: Uint8Array;
  mode?: string;
  state?: StepState;
}

export interface ResultFrame {
  status: "ok" | "error";
  payload?: Uint8Array;
  error?: { code: string; msg: string };
  phases?: PhaseBreakdown;
  totalUs?: number;
}

const STEP_ID = /^(S1|S2|S3\[[0-3]\]|S4|S5)$/;

export class FrameError extends Error {}

export function stepNumber(stepId: string): number {
  if (!STEP_ID.test(stepId)) throw new FrameError(`invalid step_id ${stepId}`);
  return Number(stepId[1]);
}

export function zeroPhases(): PhaseBreakdown {
  return { load: 0, compile: 0, instantiate: 0, init: 0, execute: 0 };
}

export function decodeInvoke(data: Uint8Array): InvokeFrame {
  const obj = decode(data);
  if (typeof obj !== "object" || obj === null || Array.isArray(obj) || obj instanceof Uint8Array) {
    throw new FrameError("frame must be a CBOR map");
  }
  const map = obj as { [key: string]: CborValue };
  if (map["op"] !== "invoke") throw new FrameError(`expected op=invoke, got ${map["op"]}`);
  const stepId = map["step_id"];
  const runId = map["run_id"];
  const payload = map["payload"];
  if (typeof stepId !== "string" || typeof runId !== "string" || !(payload instanceof Uint8Array)) {
    throw new FrameError("missing or mistyped invoke fields");
  }
  stepNumber(stepId);
  const frame: InvokeFrame = { stepId, runId, payload };
  if (typeof map["mode"] === "string") frame.mode = map["mode"] as string;
  if (map["state"] === "cold" || map["state"] === "warm") frame.state = map["state"];
  return frame;
}

export function encodeInvoke(frame: InvokeFrame): Uint8Array {
  const obj: { [key: string]: CborValue } = {
    op: "invoke",
    step_id: frame.stepId,
    run_id: frame.runId,
    payload: frame.payload,
  };
  if (frame.mode !== undefined) obj["mode"] = frame.mode;
  if (frame.state !== undefined) obj["state"] = frame.state;
  return encode(obj);
}

export function encodeResult(frame: ResultFrame): Uint8Array {
  const obj: { [key: string]: CborValue } = { op: "result", status: frame.status };
  if (frame.payload !== undefined) obj["payload"] = frame.payload;
  if (frame.error !== undefined) obj["error"] = { code: frame.error.code, msg: frame.error.msg };
  if (frame.phases !== undefined) obj["phase_breakdown"] = { ...frame.phases };
  if (frame.totalUs !== undefined) obj["total_us"] = frame.totalUs;
  return encode(obj);
}

export function decodeResult(data: Uint8Array): ResultFrame {
  const obj = decode(data) as { [key: string]: CborValue };
  if (obj["op"] !== "result") throw new FrameError(`expected op=result, got ${obj["op"]}`);
  const frame: ResultFrame = { status: obj["status"] === "ok" ? "ok" : "error" };
  if (obj["payload"] instanceof Uint8Array) frame.payload = obj["payload"];
  const err = obj["error"];
  if (err && typeof err === "object" && !Array.isArray(err) && !(err instanceof Uint8Array)) {
    frame.error = {
      code: String((err as { [k: string]: CborValue })["code"] ?? "UnknownError"),
      msg: String((err as { [k: string]: CborValue })["msg"] ?? ""),
    };
  }
  const phases = obj["phase_breakdown"];
  if (phases && typeof phases === "object" && !Array.isArray(phases) && !(phases instanceof Uint8Array)) {
    const p = phases as { [k: string]: CborValue };
    frame.phases = {
      load: Number(p["load"] ?? 0),
      compile: Number(p["compile"] ?? 0),
      instantiate: Number(p["instantiate"] ?? 0),
      init: Number(p["init"] ?? 0),
      execute: Number(p["execute"] ?? 0),
    };
  }
  if (typeof obj["total_us"] === "number") frame.totalUs = obj["total_us"];
  return frame;
}

/** Control messages ride the same socket as small CBOR maps. */
export function controlOp(data: Uint8Array): string | null {
  try {
    const obj = decode(data);
    if (obj && typeof obj === "object" && !Array.isArray(obj) && !(obj instanceof Uint8Array)) {
      const op = (obj as { [k: string]: CborValue })["op"];
      return typeof op === "string" ? op : null;
    }
  } catch {
    return null;
  }
  return null;
}

export function encodeControl(op: string): Uint8Array {
  return encode({ op });
}
