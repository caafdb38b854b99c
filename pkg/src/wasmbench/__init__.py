"""Benchmark harness for a Wasm serverless workflow across execution backends.

One five-step workflow (ingest, preprocess, 4-way matmul fan-out, reduce,
finalize) is compiled once to wasm32 modules and once to a native oracle
library, then executed through interchangeable backends under a single
orchestrator that records startup phases, per-step latency, makespan,
throughput, and CPU/RSS usage.
"""

__version__ = "0.1.0"
