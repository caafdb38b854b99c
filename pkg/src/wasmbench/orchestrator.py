"""Workflow DAG interpretation and the measurement campaign protocol.

The orchestrator owns flow control: steps never invoke one another, all
data moves through here. One run walks the benchmark DAG (S1 -> S2 ->
4x S3 -> S4 -> S5) over a backend transport, timestamps every step span
with the monotonic clock, and verifies the final digest against the
golden table. Campaigns repeat cells in a seeded random order with
separate warm-up, force cold state by resetting pools, and append one
record per run to a line-delimited log so crashed campaigns stay
resumable.
"""

from __future__ import annotations

import json
import random
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, IO

from . import steps as steps_mod
from .frames import InvokeFrame, PhaseBreakdown, ResultFrame
from .payloads import PayloadSpec, SizeClass, size_class as size_class_by_label, DEFAULT_SEED
from .steps import FAN_OUT, StepFailure, d_of, strip_bounds
from .transports import BackendUnavailable, Transport

_now_us = lambda: time.monotonic_ns() // 1000


class VerificationFailed(RuntimeError):
    """Final digest does not match the golden digest for the cell."""


@dataclass(frozen=True)
class DagSpec:
    """The workflow graph; the benchmark DAG is fixed at 5 logical steps
    with fan-out/fan-in of 4 around the matmul stage."""

    steps: tuple[str, ...]
    edges: tuple[tuple[str, str], ...]
    fan_out: int
    fan_in: int

    def validate(self) -> None:
        order = {s: i for i, s in enumerate(self.steps)}
        for src, dst in self.edges:
            if src not in order or dst not in order:
                raise ValueError(f"edge ({src}, {dst}) references unknown step")
            if order[src] >= order[dst]:
                raise ValueError(f"edge ({src}, {dst}) violates topological order")


def benchmark_dag() -> DagSpec:
    edges = [("S1", "S2")]
    edges += [("S2", f"S3[{k}]") for k in range(FAN_OUT)]
    edges += [(f"S3[{k}]", "S4") for k in range(FAN_OUT)]
    edges.append(("S4", "S5"))
    return DagSpec(
        steps=("S1", "S2") + tuple(f"S3[{k}]" for k in range(FAN_OUT)) + ("S4", "S5"),
        edges=tuple(edges),
        fan_out=FAN_OUT,
        fan_in=FAN_OUT,
    )


@dataclass(frozen=True)
class Cell:
    """One ablation configuration: environment x payload x mode x state."""

    environment: str
    payload: str  # size class label
    mode: str  # jit | aot
    state: str  # cold | warm

    def __post_init__(self) -> None:
        if self.mode not in ("jit", "aot"):
            raise ValueError(f"invalid mode {self.mode!r}")
        if self.state not in ("cold", "warm"):
            raise ValueError(f"invalid state {self.state!r}")
        size_class_by_label(self.payload)

    @property
    def cell_id(self) -> str:
        return f"{self.environment}-{self.payload}-{self.mode}-{self.state}"


@dataclass
class RunPlan:
    cells: list[Cell]
    repetitions_k: int = 20
    order_seed: int = 0
    warmup_runs: int = 3
    payload_seed: int = DEFAULT_SEED

    def __post_init__(self) -> None:
        if self.repetitions_k < 1:
            raise ValueError("repetitions_k must be >= 1")
        if self.warmup_runs < 0:
            raise ValueError("warmup_runs must be >= 0")

    def permutation(self) -> list[tuple[Cell, int]]:
        """The seeded execution order over cells x repetitions."""
        entries = [(cell, rep) for cell in self.cells for rep in range(self.repetitions_k)]
        random.Random(self.order_seed).shuffle(entries)
        return entries


@dataclass
class Span:
    step_id: str
    start_us: int
    end_us: int
    phases: PhaseBreakdown

    @property
    def duration_us(self) -> int:
        return self.end_us - self.start_us

    def to_json(self) -> dict:
        return {
            "step_id": self.step_id,
            "start_us": self.start_us,
            "end_us": self.end_us,
            "phases": self.phases.to_wire(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Span":
        return cls(
            step_id=obj["step_id"],
            start_us=int(obj["start_us"]),
            end_us=int(obj["end_us"]),
            phases=PhaseBreakdown.from_wire(obj.get("phases", {})),
        )


@dataclass
class RunRecord:
    run_id: str
    environment: str
    payload: str
    mode: str
    state: str
    seed: int
    spans: list[Span] = field(default_factory=list)
    makespan_us: int = 0
    state_observed: str = "unknown"
    verification: str = "skipped"  # ok | fail | skipped
    digest: str = ""
    discard_reason: str | None = None
    cpu_pct_mean: float | None = None
    cpu_pct_peak: float | None = None
    rss_peak_bytes: int | None = None

    @property
    def discarded(self) -> bool:
        return self.discard_reason is not None

    @property
    def cell_id(self) -> str:
        return f"{self.environment}-{self.payload}-{self.mode}-{self.state}"

    def to_json(self) -> dict:
        obj = {
            "type": "run",
            "run_id": self.run_id,
            "environment": self.environment,
            "payload": self.payload,
            "mode": self.mode,
            "state": self.state,
            "seed": self.seed,
            "spans": [s.to_json() for s in self.spans],
            "makespan_us": self.makespan_us,
            "state_observed": self.state_observed,
            "verification": self.verification,
            "digest": self.digest,
            "discard_reason": self.discard_reason,
        }
        if self.cpu_pct_mean is not None:
            obj["cpu_pct_mean"] = self.cpu_pct_mean
            obj["cpu_pct_peak"] = self.cpu_pct_peak
            obj["rss_peak_bytes"] = self.rss_peak_bytes
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "RunRecord":
        return cls(
            run_id=obj["run_id"],
            environment=obj["environment"],
            payload=obj["payload"],
            mode=obj["mode"],
            state=obj["state"],
            seed=int(obj["seed"]),
            spans=[Span.from_json(s) for s in obj.get("spans", [])],
            makespan_us=int(obj.get("makespan_us", 0)),
            state_observed=obj.get("state_observed", "unknown"),
            verification=obj.get("verification", "skipped"),
            digest=obj.get("digest", ""),
            discard_reason=obj.get("discard_reason"),
            cpu_pct_mean=obj.get("cpu_pct_mean"),
            cpu_pct_peak=obj.get("cpu_pct_peak"),
            rss_peak_bytes=obj.get("rss_peak_bytes"),
        )


def new_run_id(cell_id: str, rep: int) -> str:
    """`<config-cell>-<repetition>-<uuid>`; doubles as the trace id."""
    return f"{cell_id}-{rep}-{uuid.uuid4().hex[:12]}"


class _StepError(Exception):
    def __init__(self, step_id: str, code: str, msg: str):
        super().__init__(f"{step_id}: {code}: {msg}")
        self.step_id = step_id
        self.code = code


def _invoke_step(
    transport: Transport,
    step_id: str,
    run_id: str,
    body: bytes,
    mode: str,
    state: str,
    samples_sink: list,
) -> tuple[bytes, Span, dict]:
    start = _now_us()
    frame = InvokeFrame(step_id, run_id, body, extras={"mode": mode, "state": state})
    try:
        result = transport.invoke(frame)
    except BackendUnavailable as exc:
        # a backend lost mid-run discards the run, not the campaign
        raise _StepError(step_id, "BackendUnavailable", str(exc)) from exc
    end = _now_us()
    if result.status != "ok":
        err = result.error or {}
        raise _StepError(step_id, err.get("code", "UnknownError"), err.get("msg", ""))
    try:
        parsed_payload = steps_mod.parse_result(result.payload)
    except StepFailure as exc:
        raise _StepError(step_id, exc.code, exc.message) from None
    phases = result.phase_breakdown or PhaseBreakdown(execute=end - start)
    samples_sink.extend(result.resource_samples)
    span = Span(step_id=step_id, start_us=start, end_us=end, phases=phases)
    return result.payload[1:], span, parsed_payload


def execute_workflow(
    transport: Transport,
    payload: bytes,
    size_class: SizeClass,
    *,
    run_id: str | None = None,
    environment: str = "local",
    mode: str = "jit",
    state: str = "warm",
    seed: int = DEFAULT_SEED,
    golden: bytes | None = None,
    s3_concurrency: int = FAN_OUT,
) -> RunRecord:
    """Execute one workflow run and return its timed record.

    S1 and S2 run sequentially, the four S3 branches are dispatched
    concurrently (the backend may still serialize them), S4 starts only
    after all four branch results arrived, S5 runs last. A failed step
    marks the run discarded and skips all dependent steps.
    """
    run_id = run_id or new_run_id(f"{environment}-{size_class.label}-{mode}-{state}", 0)
    record = RunRecord(
        run_id=run_id,
        environment=environment,
        payload=size_class.label,
        mode=mode,
        state=state,
        seed=seed,
    )
    d = d_of(size_class)
    samples: list = []

    def finish(discard: str | None) -> RunRecord:
        if record.spans:
            record.makespan_us = max(s.end_us for s in record.spans) - min(
                s.start_us for s in record.spans
            )
            states = {"cold" if s.phases.instantiate > 0 else "warm" for s in record.spans}
            record.state_observed = states.pop() if len(states) == 1 else "mixed"
        record.discard_reason = discard
        if samples:
            cpu = [s.cpu_pct for s in samples]
            record.cpu_pct_mean = sum(cpu) / len(cpu)
            record.cpu_pct_peak = max(cpu)
            record.rss_peak_bytes = max(s.rss_bytes for s in samples)
        return record

    try:
        r1_bytes, span, _ = _invoke_step(
            transport, "S1", run_id, steps_mod.make_data_frame(payload), mode, state, samples
        )
        record.spans.append(span)
        r2_bytes, span, r2 = _invoke_step(transport, "S2", run_id, r1_bytes, mode, state, samples)
        record.spans.append(span)
        matrix = r2.get("payload", b"")
        if len(matrix) != d * d * 4:
            return finish(f"StepFailed:S2:unexpected output size {len(matrix)}")

        branch_frames = []
        for k in range(FAN_OUT):
            lo, hi = strip_bounds(d, k)
            branch_frames.append(steps_mod.make_block_frame(matrix, d, lo, hi))

        branch_results: list = [None] * FAN_OUT
        with ThreadPoolExecutor(max_workers=max(1, min(s3_concurrency, FAN_OUT))) as pool:
            futures = {
                pool.submit(
                    _invoke_step, transport, f"S3[{k}]", run_id, branch_frames[k], mode, state, samples
                ): k
                for k in range(FAN_OUT)
            }
            for future, k in futures.items():
                branch_results[k] = future.result()  # fan-in barrier

        s3_spans = []
        block_bytes = []
        for k in range(FAN_OUT):
            body, span, _ = branch_results[k]
            s3_spans.append(span)
            block_bytes.append(body)
        record.spans.extend(s3_spans)

        r4_bytes, span, r4 = _invoke_step(
            transport, "S4", run_id, steps_mod.make_fanin_frame(block_bytes), mode, state, samples
        )
        record.spans.append(span)

        s5_frame = steps_mod.make_finalize_frame(r4.get("payload", b""), expected=golden)
        _, span, r5 = _invoke_step(transport, "S5", run_id, s5_frame, mode, state, samples)
        record.spans.append(span)

        digest = r5.get("digest", b"")
        record.digest = digest.hex() if isinstance(digest, bytes) else ""
        if golden is not None:
            record.verification = "ok" if digest == golden else "fail"
            if record.verification == "fail":
                return finish("VerificationFailed")
        return finish(None)
    except _StepError as exc:
        return finish(f"StepFailed:{exc.step_id}:{exc.code}")


@dataclass
class PlanOutcome:
    records: list[RunRecord]
    skipped_cells: list[str]


def run_plan(
    plan: RunPlan,
    transports: dict[str, Transport],
    *,
    golden_lookup: Callable[[int, SizeClass], bytes | None] | None = None,
    sink: IO[str] | None = None,
    progress: Callable[[str], None] | None = None,
) -> PlanOutcome:
    """Execute a campaign: warm-ups first (unrecorded), then cells x k in
    the seeded permutation, resetting pools before every cold run."""
    records: list[RunRecord] = []
    skipped: list[str] = []
    healthy: dict[str, bool] = {}
    for cell in plan.cells:
        transport = transports.get(cell.environment)
        if transport is None or not transport.healthy():
            if cell.cell_id not in skipped:
                skipped.append(cell.cell_id)
                if sink is not None:
                    sink.write(json.dumps({"type": "cell_skipped", "cell": cell.cell_id}) + "\n")
                    sink.flush()
            healthy[cell.environment] = False
        else:
            healthy.setdefault(cell.environment, True)

    def one_run(cell: Cell, rep: int, record: bool) -> RunRecord | None:
        transport = transports[cell.environment]
        sc = size_class_by_label(cell.payload)
        payload = _payload_cache(plan.payload_seed, sc)
        golden = golden_lookup(plan.payload_seed, sc) if golden_lookup else None
        if cell.state == "cold" and getattr(transport, "requires_reset_for_cold", True):
            try:
                transport.reset()
            except BackendUnavailable as exc:
                rec = RunRecord(
                    run_id=new_run_id(cell.cell_id, rep),
                    environment=cell.environment,
                    payload=cell.payload,
                    mode=cell.mode,
                    state=cell.state,
                    seed=plan.payload_seed,
                    discard_reason=f"BackendUnavailable:reset:{exc}",
                )
                if record:
                    records.append(rec)
                    if sink is not None:
                        sink.write(json.dumps(rec.to_json(), sort_keys=True) + "\n")
                        sink.flush()
                return rec
        rec = execute_workflow(
            transport,
            payload,
            sc,
            run_id=new_run_id(cell.cell_id, rep),
            environment=cell.environment,
            mode=cell.mode,
            state=cell.state,
            seed=plan.payload_seed,
            golden=golden,
        )
        if record:
            records.append(rec)
            if sink is not None:
                sink.write(json.dumps(rec.to_json(), sort_keys=True) + "\n")
                sink.flush()
        return rec

    # separate warm-up, excluded from analysis
    for cell in plan.cells:
        if cell.cell_id in skipped:
            continue
        for w in range(plan.warmup_runs):
            one_run(cell, -1 - w, record=False)
            if progress:
                progress(f"warmup {cell.cell_id} {w + 1}/{plan.warmup_runs}")

    for i, (cell, rep) in enumerate(plan.permutation()):
        if cell.cell_id in skipped:
            continue
        one_run(cell, rep, record=True)
        if progress:
            progress(f"run {i + 1} {cell.cell_id} rep={rep}")

    return PlanOutcome(records=records, skipped_cells=skipped)


_payloads: dict[tuple[int, str], bytes] = {}


def _payload_cache(seed: int, sc: SizeClass) -> bytes:
    key = (seed, sc.label)
    if key not in _payloads:
        from .payloads import generate

        _payloads[key] = generate(PayloadSpec(seed, sc))
    return _payloads[key]


@dataclass
class ThroughputRecord:
    iterations: int
    elapsed_s: float
    completions_s: list[float]

    @property
    def throughput_per_s(self) -> float:
        return self.iterations / self.elapsed_s

    @property
    def mean_completion_s(self) -> float:
        return sum(self.completions_s) / len(self.completions_s)

    def to_json(self) -> dict:
        return {
            "type": "throughput",
            "iterations": self.iterations,
            "elapsed_s": self.elapsed_s,
            "throughput_per_s": self.throughput_per_s,
            "mean_completion_s": self.mean_completion_s,
        }


def closed_loop(iterations: int, run_once: Callable[[int], None]) -> ThroughputRecord:
    """Concurrency-1 closed loop: each invocation is issued only after the
    previous one completed, so throughput equals the inverse of the mean
    completion time by construction."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    completions = []
    t0 = time.monotonic()
    for i in range(iterations):
        s0 = time.monotonic()
        run_once(i)
        completions.append(time.monotonic() - s0)
    elapsed = time.monotonic() - t0
    return ThroughputRecord(iterations=iterations, elapsed_s=elapsed, completions_s=completions)


def throughput_run(
    transport: Transport,
    cell: Cell,
    iterations: int,
    *,
    payload_seed: int = DEFAULT_SEED,
    golden_lookup: Callable[[int, SizeClass], bytes | None] | None = None,
) -> ThroughputRecord:
    """Closed-loop workflow throughput for one (warm) cell."""
    sc = size_class_by_label(cell.payload)
    payload = _payload_cache(payload_seed, sc)
    golden = golden_lookup(payload_seed, sc) if golden_lookup else None

    def run_once(i: int) -> None:
        rec = execute_workflow(
            transport,
            payload,
            sc,
            run_id=new_run_id(cell.cell_id, i),
            environment=cell.environment,
            mode=cell.mode,
            state=cell.state,
            seed=payload_seed,
            golden=golden,
        )
        if rec.discarded:
            raise VerificationFailed(rec.discard_reason or "run discarded")

    return closed_loop(iterations, run_once)


class CorruptLog(ValueError):
    """A record log line failed to parse (reports the line number)."""


def load_records(log_path: Path | str, ignore_partial: bool = False) -> list[RunRecord]:
    """Parse a line-delimited record log written by :func:`run_plan`."""
    records = []
    path = Path(log_path)
    with path.open() as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                if ignore_partial:
                    continue
                raise CorruptLog(f"{path}:{lineno}: {exc}") from None
            if obj.get("type") == "run":
                records.append(RunRecord.from_json(obj))
    return records
