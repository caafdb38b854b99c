"""Best-effort CPU/RSS sampling of the executor process from /proc.

A background thread probes ``/proc/self/stat`` (utime+stime) and
``/proc/self/statm`` (resident pages) at a fixed cadence; CPU percent is
the consumed-CPU delta over the wall-clock delta, in percent of one
core. When /proc is unreadable the sampler degrades to an empty sample
list and raises a flag instead of failing invocations.
"""

from __future__ import annotations

import os
import threading
import time
from collections import deque

from .frames import ResourceSample

DEFAULT_PERIOD_S = 0.020


class SamplerUnavailable(RuntimeError):
    """Process statistics are not readable on this system."""


def read_cpu_rss() -> tuple[float, int]:
    """(cpu_seconds_total, rss_bytes) for the current process.

    Raises SamplerUnavailable when /proc is missing or malformed.
    """
    try:
        with open("/proc/self/stat") as f:
            raw = f.read()
        # comm may contain spaces; fields are positional after the ')'
        after = raw.rsplit(")", 1)[1].split()
        utime, stime = int(after[11]), int(after[12])
        hertz = os.sysconf("SC_CLK_TCK")
        with open("/proc/self/statm") as f:
            resident_pages = int(f.read().split()[1])
        return (utime + stime) / hertz, resident_pages * os.sysconf("SC_PAGE_SIZE")
    except (OSError, ValueError, IndexError) as exc:
        raise SamplerUnavailable(str(exc)) from exc


def sample_resources(window_s: float, period_s: float = DEFAULT_PERIOD_S) -> list[ResourceSample]:
    """Sample for ``window_s`` seconds at the given cadence (blocking)."""
    if period_s <= 0:
        raise ValueError("period must be positive")
    samples: list[ResourceSample] = []
    try:
        prev_cpu, _ = read_cpu_rss()
    except SamplerUnavailable:
        return samples
    prev_t = time.monotonic()
    deadline = prev_t + window_s
    while True:
        time.sleep(period_s)
        now = time.monotonic()
        try:
            cpu, rss = read_cpu_rss()
        except SamplerUnavailable:
            return samples
        dt = now - prev_t
        cpu_pct = 100.0 * (cpu - prev_cpu) / dt if dt > 0 else 0.0
        samples.append(ResourceSample(t=int(now * 1e6), cpu_pct=max(cpu_pct, 0.0), rss_bytes=rss))
        prev_cpu, prev_t = cpu, now
        if now >= deadline:
            return samples


class ResourceSampler:
    """Continuous sampler owned by the executor; invocations select the
    samples covering their execute window by timestamp."""

    def __init__(self, period_s: float = DEFAULT_PERIOD_S, keep: int = 50_000):
        if period_s <= 0:
            raise ValueError("period must be positive")
        self.period_s = period_s
        self._samples: deque[ResourceSample] = deque(maxlen=keep)
        self._lock = threading.Lock()
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self.degraded = False

    def start(self) -> None:
        try:
            read_cpu_rss()
        except SamplerUnavailable:
            self.degraded = True
            return
        self._thread = threading.Thread(target=self._loop, name="resource-sampler", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=2.0)
            self._thread = None

    def window(self, start_us: int, end_us: int) -> list[ResourceSample]:
        with self._lock:
            return [s for s in self._samples if start_us <= s.t <= end_us]

    def _loop(self) -> None:
        try:
            prev_cpu, _ = read_cpu_rss()
        except SamplerUnavailable:
            self.degraded = True
            return
        prev_t = time.monotonic()
        while not self._stop.wait(self.period_s):
            try:
                cpu, rss = read_cpu_rss()
            except SamplerUnavailable:
                self.degraded = True
                return
            now = time.monotonic()
            dt = now - prev_t
            cpu_pct = 100.0 * (cpu - prev_cpu) / dt if dt > 0 else 0.0
            sample = ResourceSample(
                t=time.monotonic_ns() // 1000, cpu_pct=max(cpu_pct, 0.0), rss_bytes=rss
            )
            with self._lock:
                self._samples.append(sample)
            prev_cpu, prev_t = cpu, now
