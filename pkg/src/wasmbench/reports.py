"""Report generation over run records.

Pure function of the inputs: the same record log yields byte-identical
CSV files and JSON bundle (sorted rows, deterministic float formatting,
seeded bootstrap). Output is plot-ready structured data; rendering is
out of scope.
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

from .orchestrator import RunRecord, ThroughputRecord
from .shim import ArtifactSizeEntry
from .stats import EmptyInput, StatsSummary, summarize

STARTUP_PHASES = ("load", "compile", "instantiate", "init")


class IncompleteCell(Warning):
    """A cell contributed no analyzable records."""


@dataclass
class ReportBundle:
    summaries: dict
    csv_files: dict[str, str]
    provenance: dict

    def _stamp(self) -> str:
        """One comment line carried by every output file (provenance chain)."""
        lock = self.provenance.get("lockfile_digest", "unknown")
        config = self.provenance.get("config_hash", "unknown")
        return f"# lockfile={lock} config={config}\n"

    def write(self, out_dir: Path | str) -> list[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        written = []
        for name, content in sorted(self.csv_files.items()):
            path = out_dir / f"{name}.csv"
            path.write_text(self._stamp() + content)
            written.append(path)
        bundle = {"summaries": self.summaries, "provenance": self.provenance}
        path = out_dir / "bundle.json"
        path.write_text(json.dumps(bundle, indent=2, sort_keys=True) + "\n")
        written.append(path)
        return written


def _csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _summary_row(key: list, summary: StatsSummary) -> list:
    return key + [
        summary.n,
        repr(summary.median),
        repr(summary.p25),
        repr(summary.p75),
        repr(summary.iqr),
        repr(summary.ci95_low),
        repr(summary.ci95_high),
        summary.outliers_removed,
    ]


_SUMMARY_COLS = ["n", "median", "p25", "p75", "iqr", "ci95_low", "ci95_high", "outliers_removed"]


def build_reports(
    records: list[RunRecord],
    throughput: list[ThroughputRecord] | None = None,
    throughput_cells: list[str] | None = None,
    artifact_sizes: list[ArtifactSizeEntry] | None = None,
    provenance: dict | None = None,
) -> ReportBundle:
    """Aggregate records into per-cell distributions and summary tables."""
    usable = [r for r in records if not r.discarded]
    discarded = [r for r in records if r.discarded]
    cells = sorted({r.cell_id for r in records})
    incomplete = sorted({c for c in cells if not any(r.cell_id == c for r in usable)})
    for cell in incomplete:
        warnings.warn(IncompleteCell(f"cell {cell} has no analyzable records"), stacklevel=2)

    summaries: dict = {"cells": {}}
    csv_files: dict[str, str] = {}

    # -- startup phases ----------------------------------------------------
    startup_rows = []
    for cell in cells:
        cell_records = [r for r in usable if r.cell_id == cell]
        if not cell_records:
            continue
        cell_summary: dict = {}
        for phase in STARTUP_PHASES + ("startup_total",):
            values = []
            for r in cell_records:
                for span in r.spans:
                    p = span.phases
                    if phase == "startup_total":
                        values.append(float(p.load + p.compile + p.instantiate + p.init))
                    else:
                        values.append(float(getattr(p, phase)))
            if values:
                s = summarize(values)
                startup_rows.append(_summary_row([cell, phase], s))
                cell_summary[phase] = s.to_json()
        summaries["cells"].setdefault(cell, {})["startup_us"] = cell_summary
    csv_files["startup"] = _csv(["cell", "phase"] + _SUMMARY_COLS, startup_rows)

    # -- per-step latency --------------------------------------------------
    latency_rows = []
    for cell in cells:
        cell_records = [r for r in usable if r.cell_id == cell]
        if not cell_records:
            continue
        by_step: dict[str, list[float]] = {}
        for r in cell_records:
            for span in r.spans:
                by_step.setdefault(span.step_id, []).append(float(span.duration_us))
                if span.step_id.startswith("S3["):
                    by_step.setdefault("S3", []).append(float(span.duration_us))
        step_summary = {}
        for step in sorted(by_step):
            s = summarize(by_step[step])
            latency_rows.append(_summary_row([cell, step], s))
            step_summary[step] = s.to_json()
        summaries["cells"].setdefault(cell, {})["step_latency_us"] = step_summary
    csv_files["step_latency"] = _csv(["cell", "step"] + _SUMMARY_COLS, latency_rows)

    # -- makespan ----------------------------------------------------------
    makespan_rows = []
    for cell in cells:
        values = [float(r.makespan_us) for r in usable if r.cell_id == cell]
        if not values:
            continue
        s = summarize(values)
        makespan_rows.append(_summary_row([cell], s))
        summaries["cells"].setdefault(cell, {})["makespan_us"] = s.to_json()
    csv_files["makespan"] = _csv(["cell"] + _SUMMARY_COLS, makespan_rows)

    # -- throughput ----------------------------------------------------------
    tp_rows = []
    for i, tp in enumerate(throughput or []):
        cell = (throughput_cells or [])[i] if throughput_cells and i < len(throughput_cells) else ""
        tp_rows.append(
            [
                cell,
                tp.iterations,
                repr(tp.elapsed_s),
                repr(tp.throughput_per_s),
                repr(tp.mean_completion_s),
            ]
        )
        if cell:
            summaries["cells"].setdefault(cell, {})["throughput_per_s"] = tp.throughput_per_s
    csv_files["throughput"] = _csv(
        ["cell", "iterations", "elapsed_s", "throughput_per_s", "mean_completion_s"], tp_rows
    )

    # -- resources -----------------------------------------------------------
    resource_rows = []
    for cell in cells:
        cell_records = [r for r in usable if r.cell_id == cell and r.cpu_pct_mean is not None]
        if not cell_records:
            continue
        metrics = {
            "cpu_pct_mean": [float(r.cpu_pct_mean) for r in cell_records],
            "cpu_pct_peak": [float(r.cpu_pct_peak) for r in cell_records],
            "rss_peak_bytes": [float(r.rss_peak_bytes) for r in cell_records],
        }
        resource_summary = {}
        for name, values in metrics.items():
            s = summarize(values)
            resource_rows.append(_summary_row([cell, name], s))
            resource_summary[name] = s.to_json()
        summaries["cells"].setdefault(cell, {})["resources"] = resource_summary
    csv_files["resources"] = _csv(["cell", "metric"] + _SUMMARY_COLS, resource_rows)

    # -- artifact sizes (Table-2 layout) ------------------------------------
    size_rows = []
    for entry in artifact_sizes or []:
        size_rows.append(
            [
                entry.step,
                repr(entry.wasm_bytes / 1e6),
                repr(entry.aot_bytes / 1e6),
                f"+{entry.pct_increase}%",
            ]
        )
        summaries.setdefault("artifact_sizes", {})[entry.step] = entry.to_json()
    csv_files["artifact_sizes"] = _csv(
        ["step", "wasm_mb", "aot_mb", "size_increase"], size_rows
    )

    prov = dict(provenance or {})
    prov["records_total"] = len(records)
    prov["records_discarded"] = len(discarded)
    prov["discarded_by_cell"] = {
        cell: sum(1 for r in discarded if r.cell_id == cell)
        for cell in sorted({r.cell_id for r in discarded})
    }
    prov["incomplete_cells"] = incomplete
    return ReportBundle(summaries=summaries, csv_files=csv_files, provenance=prov)
