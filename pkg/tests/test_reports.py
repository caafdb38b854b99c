"""Report bundle structure and regeneration determinism."""

import io
import json

import pytest

from wasmbench import golden
from wasmbench.orchestrator import Cell, RunPlan, ThroughputRecord, load_records, run_plan
from wasmbench.reports import build_reports
from wasmbench.shim import ArtifactSizeEntry
from wasmbench.transports import StubTransport


@pytest.fixture(scope="module")
def records(oracle, tmp_path_factory):
    plan = RunPlan(
        cells=[
            Cell("local", "small", "jit", "warm"),
            Cell("local", "small", "jit", "cold"),
        ],
        repetitions_k=4,
        order_seed=3,
        warmup_runs=1,
    )
    log = tmp_path_factory.mktemp("log") / "records.jsonl"
    with log.open("w") as sink:
        run_plan(plan, {"local": StubTransport(handler=oracle.run_step)}, sink=sink,
                 golden_lookup=lambda seed, sc: golden.lookup(seed, sc))
    return load_records(log)


_SIZES = [
    ArtifactSizeEntry("S1", 152_000, 342_000),
    ArtifactSizeEntry("S2", 135_000, 317_000),
    ArtifactSizeEntry("S3", 141_000, 322_000),
    ArtifactSizeEntry("S4", 151_000, 354_000),
    ArtifactSizeEntry("S5", 153_000, 360_000),
]


def test_bundle_structure(records):
    bundle = build_reports(records, artifact_sizes=_SIZES)
    assert set(bundle.csv_files) == {
        "startup", "step_latency", "makespan", "throughput", "resources", "artifact_sizes",
    }
    cells = bundle.summaries["cells"]
    assert set(cells) == {"local-small-jit-warm", "local-small-jit-cold"}
    warm = cells["local-small-jit-warm"]
    assert set(warm["startup_us"]) == {"load", "compile", "instantiate", "init", "startup_total"}
    # 5 logical steps + 4 branch rows + pooled S3 row
    assert set(warm["step_latency_us"]) == {
        "S1", "S2", "S3", "S3[0]", "S3[1]", "S3[2]", "S3[3]", "S4", "S5",
    }
    assert "makespan_us" in warm


def test_artifact_size_table_layout(records):
    bundle = build_reports(records, artifact_sizes=_SIZES)
    lines = bundle.csv_files["artifact_sizes"].splitlines()
    assert lines[0] == "step,wasm_mb,aot_mb,size_increase"
    assert lines[1].startswith("S1,") and lines[1].endswith("+125%")
    increases = [line.rsplit(",", 1)[1] for line in lines[1:]]
    assert increases == ["+125%", "+135%", "+128%", "+134%", "+135%"]


def test_regeneration_byte_identical(records):
    a = build_reports(records, artifact_sizes=_SIZES)
    b = build_reports(records, artifact_sizes=_SIZES)
    assert a.csv_files == b.csv_files
    assert json.dumps(a.summaries, sort_keys=True) == json.dumps(b.summaries, sort_keys=True)


def test_write_outputs(records, tmp_path):
    bundle = build_reports(records, artifact_sizes=_SIZES, provenance={"k": 4})
    written = bundle.write(tmp_path)
    names = {p.name for p in written}
    assert names == {
        "startup.csv", "step_latency.csv", "makespan.csv", "throughput.csv",
        "resources.csv", "artifact_sizes.csv", "bundle.json",
    }
    payload = json.loads((tmp_path / "bundle.json").read_text())
    assert payload["provenance"]["k"] == 4
    assert payload["provenance"]["records_total"] == len(records)


def test_discarded_excluded_and_counted(records):
    from wasmbench.orchestrator import RunRecord

    spoiled = [RunRecord.from_json(r.to_json()) for r in records]
    spoiled[0].discard_reason = "StepFailed:S1:StepTrap"
    bundle = build_reports(spoiled)
    assert bundle.provenance["records_discarded"] == 1
    assert bundle.provenance["discarded_by_cell"][spoiled[0].cell_id] == 1
    # makespan rows only cover non-discarded records
    makespan = bundle.summaries["cells"][spoiled[0].cell_id]["makespan_us"]
    assert makespan["n"] <= sum(1 for r in spoiled if r.cell_id == spoiled[0].cell_id) - 1


def test_throughput_rows():
    tp = ThroughputRecord(iterations=10, elapsed_s=1.0, completions_s=[0.1] * 10)
    bundle = build_reports([], throughput=[tp], throughput_cells=["local-small-jit-warm"])
    lines = bundle.csv_files["throughput"].splitlines()
    assert len(lines) == 2
    assert lines[1].startswith("local-small-jit-warm,10,")
    assert bundle.summaries["cells"]["local-small-jit-warm"]["throughput_per_s"] == 10.0


def test_incomplete_cell_flagged(records):
    from wasmbench.orchestrator import RunRecord
    from wasmbench.reports import IncompleteCell

    spoiled = [
        RunRecord.from_json(r.to_json()) for r in records if r.cell_id == "local-small-jit-warm"
    ]
    for r in spoiled:
        r.discard_reason = "StepFailed:S1:Timeout"
    with pytest.warns(IncompleteCell):
        bundle = build_reports(spoiled)
    assert bundle.provenance["incomplete_cells"] == ["local-small-jit-warm"]
