"""Operator entry point: build artifacts, serve the executor, run
campaigns, analyze record logs.

Exit codes: 0 ok, 1 usage error, 2 backend failure, 3 verification
failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import yaml

from . import artifacts as artifacts_mod
from . import golden as golden_mod
from .orchestrator import (
    Cell,
    RunPlan,
    load_records,
    run_plan,
    throughput_run,
    CorruptLog,
)
from .payloads import PayloadSpec, SIZE_CLASSES, generate, size_class
from .reports import build_reports
from .shim import ExecutorConfig, ExecutorServer, report_artifact_sizes, MissingArtifact

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_BACKEND = 2
EXIT_VERIFICATION = 3

DEFAULT_ARTIFACT_DIR = Path("artifacts")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> "NoReturn":  # noqa: F821 - argparse idiom
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path) as f:
            return yaml.safe_load(f) or {}
    except (OSError, yaml.YAMLError) as exc:
        print(f"error: cannot read config {path}: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE) from None


def _config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True, default=str).encode()).hexdigest()


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_build(args: argparse.Namespace, config: dict) -> int:
    out_dir = Path(args.out or config.get("artifact_dir", DEFAULT_ARTIFACT_DIR))
    try:
        lock = artifacts_mod.build_artifacts(out_dir, force=args.force)
    except artifacts_mod.BuildFailed as exc:
        print(f"build failed: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    print(f"built {len(lock['artifacts'])} artifacts into {out_dir}")

    if args.aot:
        from .engine import WasmtimeEngine, precompile_aot

        engine = WasmtimeEngine()
        for step in artifacts_mod.STEP_IDS:
            wasm = out_dir / artifacts_mod.wasm_artifact_name(step)
            aot = precompile_aot(wasm, engine)
            lock["artifacts"][aot.name] = {
                "sha256": hashlib.sha256(aot.read_bytes()).hexdigest(),
                "bytes": aot.stat().st_size,
            }
        (out_dir / "lockfile.json").write_text(json.dumps(lock, indent=2, sort_keys=True) + "\n")
        _print_sizes(out_dir)

    if args.golden:
        from .oracle import NativeOracle

        oracle = NativeOracle.from_artifact_dir(out_dir)
        table = golden_mod.generate_table(oracle)
        path = golden_mod.write_table(table)
        print(f"golden digests written to {path}")

    print(f"lockfile: {out_dir / 'lockfile.json'}")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace, config: dict) -> int:
    exec_cfg = ExecutorConfig(
        artifact_dir=Path(args.artifacts or config.get("artifact_dir", DEFAULT_ARTIFACT_DIR)),
        mode=args.mode or config.get("mode", "jit"),
        state_policy=config.get("state_policy", "warm_pool"),
        pool_size=args.pool_size or int(config.get("pool_size", 1)),
        sample_period_s=float(config.get("sample_period_s", 0.020)),
        timeout_s=float(config.get("timeout_s", 120.0)),
    )
    host, _, port = (args.listen or "127.0.0.1:8080").rpartition(":")
    server = ExecutorServer(exec_cfg, host=host or "127.0.0.1", port=int(port))
    print(f"executor listening on {server.address} (mode={exec_cfg.mode})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.stop()
    return EXIT_OK


def _build_transports(backends: dict, artifact_dir: Path) -> dict:
    from .transports import HttpTransport, LocalTransport

    transports = {}
    for env, url in backends.items():
        if url == "local":
            from .shim import StepExecutor

            transports[env] = LocalTransport(StepExecutor(ExecutorConfig(artifact_dir=artifact_dir)))
        elif url.startswith("bridge://"):
            from .bridge import BridgeServer

            host, _, port = url[len("bridge://") :].rpartition(":")
            bridge = BridgeServer(host=host or "127.0.0.1", port=int(port or 8787))
            print(f"bridge listening on port {bridge.port}; waiting for harness page...")
            bridge.wait_for_harness()
            transports[env] = bridge
        else:
            transports[env] = HttpTransport(url)
    return transports


def _plan_from(args: argparse.Namespace, config: dict) -> RunPlan:
    plan_cfg = dict(config.get("plan", {}))
    cells_cfg = plan_cfg.get("cells") or []
    cells = [Cell(**c) for c in cells_cfg]
    if not cells:
        cells = [
            Cell(
                environment=args.env or "local",
                payload=args.payload or "small",
                mode=args.mode or "jit",
                state=args.state or "warm",
            )
        ]
    else:
        if args.env:
            cells = [c for c in cells if c.environment == args.env]
        if args.payload:
            cells = [c for c in cells if c.payload == args.payload]
        if args.mode:
            cells = [c for c in cells if c.mode == args.mode]
        if args.state:
            cells = [c for c in cells if c.state == args.state]
    return RunPlan(
        cells=cells,
        repetitions_k=args.k or int(plan_cfg.get("repetitions_k", 20)),
        order_seed=int(plan_cfg.get("order_seed", 0)),
        warmup_runs=int(plan_cfg.get("warmup_runs", 3)),
        payload_seed=args.seed if args.seed is not None else int(plan_cfg.get("payload_seed", 42)),
    )


def cmd_run(args: argparse.Namespace, config: dict) -> int:
    plan = _plan_from(args, config)
    if not plan.cells:
        print("error: no cells selected", file=sys.stderr)
        return EXIT_USAGE

    if args.dry_run:
        for i, (cell, rep) in enumerate(plan.permutation()):
            print(f"{i:4d}  {cell.cell_id}  rep={rep}")
        return EXIT_OK

    artifact_dir = Path(config.get("artifact_dir", DEFAULT_ARTIFACT_DIR))
    backends = dict(config.get("backends") or {})
    if backends:
        missing = sorted({c.environment for c in plan.cells} - set(backends))
        if missing:
            print(f"error: no backend entry for environment(s): {', '.join(missing)}", file=sys.stderr)
            return EXIT_USAGE
    else:
        # no backends declared at all: ad-hoc local run
        for cell in plan.cells:
            backends.setdefault(cell.environment, "local")

    out_dir = Path(args.out or config.get("output_dir", "out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "records.jsonl"

    transports = _build_transports(backends, artifact_dir)
    try:
        with log_path.open("a") as sink:
            outcome = run_plan(
                plan,
                transports,
                golden_lookup=lambda seed, sc: golden_mod.lookup(seed, sc),
                sink=sink,
                progress=lambda msg: print(msg, file=sys.stderr),
            )
    finally:
        for transport in transports.values():
            transport.close()

    print(f"log: {log_path} ({len(outcome.records)} records)")
    failed = [r for r in outcome.records if r.verification == "fail"]
    if outcome.skipped_cells:
        print(f"skipped cells (backend unavailable): {outcome.skipped_cells}", file=sys.stderr)
        return EXIT_BACKEND
    discarded = [r for r in outcome.records if r.discarded]
    if len(outcome.records) and len(discarded) / len(outcome.records) > 0.5:
        print(f"excessive discards: {len(discarded)}/{len(outcome.records)}", file=sys.stderr)
        return EXIT_BACKEND
    if failed:
        print(f"verification failures: {len(failed)}", file=sys.stderr)
        return EXIT_VERIFICATION
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace, config: dict) -> int:
    log_path = Path(args.log)
    try:
        records = load_records(log_path, ignore_partial=args.ignore_partial)
    except CorruptLog as exc:
        print(f"corrupt log: {exc}\nhint: re-run with --ignore-partial", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    artifact_dir = Path(config.get("artifact_dir", DEFAULT_ARTIFACT_DIR))
    sizes = None
    lock = None
    lock_path = artifact_dir / "lockfile.json"
    if lock_path.exists():
        lock = json.loads(lock_path.read_text())
    try:
        sizes = report_artifact_sizes(artifact_dir)
    except MissingArtifact:
        sizes = None

    provenance = {
        "record_log": str(log_path),
        "config_hash": _config_hash(config),
        "golden_digests": golden_mod.load_table(),
        "payload_seeds": sorted({r.seed for r in records}),
    }
    if lock is not None:
        provenance["lockfile_digest"] = artifacts_mod.lockfile_digest(lock)

    bundle = build_reports(records, artifact_sizes=sizes, provenance=provenance)
    out_dir = Path(args.out or config.get("output_dir", "out")) / "reports"
    written = bundle.write(out_dir)
    for path in written:
        print(path)
    return EXIT_OK


def cmd_gen_payload(args: argparse.Namespace, config: dict) -> int:
    spec = PayloadSpec(seed=args.seed if args.seed is not None else 42, size_class=size_class(args.size))
    data = generate(spec)
    if args.out:
        Path(args.out).write_bytes(data)
        print(f"{args.out}: {len(data)} bytes")
    else:
        sys.stdout.buffer.write(data)
    return EXIT_OK


def cmd_sizes(args: argparse.Namespace, config: dict) -> int:
    artifact_dir = Path(args.artifacts or config.get("artifact_dir", DEFAULT_ARTIFACT_DIR))
    try:
        _print_sizes(artifact_dir)
    except MissingArtifact as exc:
        print(f"missing artifact: {exc} (build with --aot first)", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


def _print_sizes(artifact_dir: Path) -> None:
    entries = report_artifact_sizes(artifact_dir)
    print(f"{'Step':<6}{'Wasm (MB)':>12}{'AOT (MB)':>12}{'Increase':>10}")
    for e in entries:
        print(
            f"{e.step:<6}{e.wasm_bytes / 1e6:>12.3f}{e.aot_bytes / 1e6:>12.3f}"
            f"{'+' + str(e.pct_increase) + '%':>10}"
        )


# ---------------------------------------------------------------------------


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wasmbench", description=__doc__)
    parser.add_argument("--config", help="declarative campaign config (YAML)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="compile wasm guests + native oracle, pin digests")
    p.add_argument("--out", help="artifact output directory")
    p.add_argument("--aot", action="store_true", help="also precompile AOT objects")
    p.add_argument("--golden", action="store_true", help="regenerate the golden digest table")
    p.add_argument("--force", action="store_true", help="rebuild even if sources unchanged")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("serve", help="serve the executor shim over HTTP")
    p.add_argument("--artifacts", help="artifact directory")
    p.add_argument("--listen", help="host:port (default 127.0.0.1:8080)")
    p.add_argument("--mode", choices=["jit", "aot"], help="default execution mode")
    p.add_argument("--pool-size", type=int, dest="pool_size", help="warm pool capacity per step")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("run", help="run a measurement campaign")
    p.add_argument("--seed", type=int, help="payload seed")
    p.add_argument("--k", type=int, help="repetitions per cell")
    p.add_argument("--mode", choices=["jit", "aot"])
    p.add_argument("--state", choices=["cold", "warm"])
    p.add_argument("--payload", choices=sorted(SIZE_CLASSES))
    p.add_argument("--env", help="restrict to one environment")
    p.add_argument("--out", help="output directory")
    p.add_argument("--dry-run", action="store_true", help="print the resolved permutation")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("analyze", help="build reports from a record log")
    p.add_argument("log", help="records.jsonl produced by `run`")
    p.add_argument("--out", help="output directory")
    p.add_argument("--ignore-partial", action="store_true", help="skip unparseable lines")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("gen-payload", help="emit a deterministic payload")
    p.add_argument("--seed", type=int, help="payload seed (default 42)")
    p.add_argument("--size", required=True, choices=sorted(SIZE_CLASSES))
    p.add_argument("--out", help="write to file instead of stdout")
    p.set_defaults(func=cmd_gen_payload)

    p = sub.add_parser("sizes", help="artifact size accounting (wasm vs AOT)")
    p.add_argument("--artifacts", help="artifact directory")
    p.set_defaults(func=cmd_sizes)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    config = _load_config(args.config)
    try:
        return args.func(args, config)
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
