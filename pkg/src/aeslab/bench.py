"""Latency and throughput benchmarks over the encryption pipeline.

Each measurement runs the full pipeline once untimed to warm caches and
worker pools, then times a second run. Mean latency comes from the
per-block spans, throughput from blocks over the timed wall clock. Peak
memory is the process high-water mark (ru_maxrss) where the platform
exposes it.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, replace
from pathlib import Path
from statistics import fmean
from typing import List, Optional, Sequence, Union

from .cipher import Key128, run_pipeline
from .workload import Mode, RunConfig

try:
    import resource
except ImportError:  # non-POSIX platforms
    resource = None  # type: ignore[assignment]


BENCH_COLUMNS = [
    "block_count", "workers", "mean_latency_us", "throughput_bps",
    "peak_memory_mb", "wall_time_s", "error",
]


@dataclass(frozen=True)
class BenchRecord:
    block_count: int
    workers: int
    mean_latency_us: Optional[float]
    throughput_bps: Optional[float]
    peak_memory_mb: Optional[float]
    wall_time_s: Optional[float]
    error: Optional[str] = None


def peak_memory_mb() -> Optional[float]:
    """Process peak RSS in MiB, or None where ru_maxrss is unavailable."""
    if resource is None:
        return None
    usage = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    return usage / 1024.0  # Linux reports KiB


def measure_run(cfg: RunConfig, key: Key128) -> BenchRecord:
    """Warm up, then time one pipeline run under cfg."""
    if cfg.mode is not Mode.REAL:
        raise ValueError("benchmarks measure real mode only")
    cfg.validate()
    run_pipeline(cfg, key)
    start = time.perf_counter()
    records = run_pipeline(cfg, key)
    wall_s = time.perf_counter() - start
    return BenchRecord(
        block_count=cfg.n_blocks,
        workers=cfg.workers,
        mean_latency_us=fmean(r.time_us for r in records),
        throughput_bps=cfg.n_blocks / wall_s,
        peak_memory_mb=peak_memory_mb(),
        wall_time_s=wall_s,
    )


def _append_row(path: Path, record: BenchRecord) -> None:
    new_file = not path.exists()
    with open(path, "a", newline="", encoding="ascii") as handle:
        writer = csv.writer(handle)
        if new_file:
            writer.writerow(BENCH_COLUMNS)
        writer.writerow([
            record.block_count,
            record.workers,
            "" if record.mean_latency_us is None else f"{record.mean_latency_us:.3f}",
            "" if record.throughput_bps is None else f"{record.throughput_bps:.3f}",
            "" if record.peak_memory_mb is None else f"{record.peak_memory_mb:.1f}",
            "" if record.wall_time_s is None else f"{record.wall_time_s:.6f}",
            record.error or "",
        ])


def sweep(
    block_counts: Sequence[int],
    worker_counts: Sequence[int],
    base_cfg: RunConfig,
    key: Key128,
    csv_path: Optional[Union[str, Path]] = None,
) -> List[BenchRecord]:
    """Measure every (blocks, workers) cell in ascending order.

    A failing cell is recorded with its error message instead of aborting
    the rest of the sweep. Rows are appended to csv_path as they finish.
    """
    blocks = sorted(set(int(b) for b in block_counts))
    workers = sorted(set(int(w) for w in worker_counts))
    if not blocks or not workers:
        raise ValueError("block_counts and worker_counts must be non-empty")
    if blocks[0] < 1 or workers[0] < 1:
        raise ValueError("block and worker counts must be positive")
    path = Path(csv_path) if csv_path is not None else None
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
    results: List[BenchRecord] = []
    for b in blocks:
        for w in workers:
            cfg = replace(base_cfg, n_blocks=b, workers=w)
            try:
                record = measure_run(cfg, key)
            except Exception as exc:  # keep the sweep alive, report the cell
                record = BenchRecord(b, w, None, None, None, None, error=str(exc) or type(exc).__name__)
            results.append(record)
            if path is not None:
                _append_row(path, record)
    return results
