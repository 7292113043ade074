"""Batch driver: buckets, trucks and dumps for a whole replay, written as CSV/JSON reports.

Work is split into fixed-size chunks whose composition does not depend on the
worker count, and results are collected in submission order, so the reports
are byte-identical for any number of workers.
"""

from __future__ import annotations

import json
import logging
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .blocks import BlockModel
from .bucket import BucketEstimate, BucketEstimator
from .config import PipelineConfig
from .errors import EstimationError
from .gmm import GaussianMoment, cdf, normal_pdf, pdf
from .haul import (
    DumpEstimate,
    TruckEstimate,
    estimate_dump_correlated,
    estimate_dump_window,
    estimate_truck,
    window_groups,
)
from .io import fmt, write_table
from .records import DigEvent, HaulCycle, sort_key

log = logging.getLogger(__name__)

CELL_CHUNK = 2048
BUCKET_CHUNK = 64
TRUCK_CHUNK = 16

BUCKET_COLUMNS = ("dig_event_id", "mean", "std", "n_components")
TRUCK_COLUMNS = ("truck_id", "dump_id", "mean", "std", "n_buckets", "n_simulations")
DUMP_COLUMNS = (
    "dump_id", "mode", "window_index", "window_start", "mean", "std",
    "n_trucks", "n_buckets", "n_simulations",
)
ERROR_COLUMNS = ("entity", "entity_id", "error")
PLOT_COLUMNS = ("x", "pdf", "cdf", "matched_pdf")


@dataclass
class ReportBundle:
    buckets: list[BucketEstimate]
    trucks: list[TruckEstimate]
    dumps: list[DumpEstimate]
    errors: list[tuple[str, str, str]]
    summary: dict
    paths: dict[str, Path] = field(default_factory=dict)
    plot_estimates: dict[int, BucketEstimate] = field(default_factory=dict)


# worker-process state, installed by _init_worker
_STATE: dict = {}


def _init_worker(model: BlockModel, config: PipelineConfig, cells: dict | None) -> None:
    est = BucketEstimator(model, config)
    if cells:
        est.preload(cells)
    _STATE["est"] = est


def _cells_task(keys: list[tuple]) -> dict:
    return _STATE["est"].compute_cells(keys)


def _bucket_task(digs: list[DigEvent]) -> list:
    est: BucketEstimator = _STATE["est"]
    out = []
    for d in digs:
        try:
            out.append(est.estimate(d))
        except EstimationError as exc:
            out.append(("bucket", str(d.dig_event_id), exc.reason))
    return out


def _truck_task(trucks: list[tuple[str, list[DigEvent]]]) -> list:
    est: BucketEstimator = _STATE["est"]
    out = []
    for truck_id, digs in trucks:
        try:
            out.append(estimate_truck(truck_id, digs, est.model, est.cov, est.config, est))
        except EstimationError as exc:
            out.append(("truck", truck_id, exc.reason))
    return out


def _dump_task(item: tuple[str, dict[str, list[DigEvent]]]):
    est: BucketEstimator = _STATE["est"]
    dump_id, trucks = item
    try:
        return estimate_dump_correlated(dump_id, trucks, est.model, est.cov, est.config, est)
    except EstimationError as exc:
        return ("dump", dump_id, exc.reason)


class _Runner:
    """Maps tasks either inline or over a process pool, preserving order."""

    def __init__(self, workers: int, model: BlockModel, config: PipelineConfig, cells: dict | None = None) -> None:
        self.workers = workers
        self.args = (model, config, cells)
        self.pool: ProcessPoolExecutor | None = None

    def __enter__(self) -> _Runner:
        if self.workers > 1:
            self.pool = ProcessPoolExecutor(self.workers, initializer=_init_worker, initargs=self.args)
        else:
            saved = dict(_STATE)
            _init_worker(*self.args)
            self._saved = saved
        return self

    def __exit__(self, *exc) -> None:
        if self.pool is not None:
            self.pool.shutdown()
        else:
            _STATE.clear()
            _STATE.update(self._saved)

    def map(self, fn: Callable, items: Sequence) -> list:
        if self.pool is None:
            return [fn(i) for i in items]
        return list(self.pool.map(fn, items))


def _chunks(items: Sequence, size: int) -> list:
    return [list(items[i:i + size]) for i in range(0, len(items), size)]


def plot_frame(estimate: BucketEstimate, n_points: int = 512) -> np.ndarray:
    """Columns x, mixture pdf, mixture cdf, matched pdf over mean +- 5 std."""
    if estimate.components is None:
        raise ValueError("plot data needs retained mixture components")
    m = estimate.matched
    half = 5.0 * max(m.std, 1e-9)
    x = np.linspace(m.mean - half, m.mean + half, n_points)
    mix = estimate.components
    matched = m if m.variance > 0 else GaussianMoment(m.mean, 1e-18)
    return np.column_stack([x, pdf(mix, x), cdf(mix, x), normal_pdf(x, matched)])


def emit_plot_data(estimate: BucketEstimate, path, n_points: int = 512) -> Path:
    frame = plot_frame(estimate, n_points)
    write_table(path, PLOT_COLUMNS, frame.tolist())
    return Path(path)


def _stage(values: list[GaussianMoment]) -> dict:
    if not values:
        return {"count": 0, "mean": None, "mean_std": None, "std_of_means": None}
    means = np.array([v.mean for v in values])
    stds = np.array([v.std for v in values])
    return {
        "count": len(values),
        "mean": float(fmt(means.mean())),
        "mean_std": float(fmt(stds.mean())),
        "std_of_means": float(fmt(means.std())),
    }


def run_pipeline(
    config: PipelineConfig,
    model: BlockModel,
    digs: Sequence[DigEvent],
    cycles: Sequence[HaulCycle],
    out_dir=None,
) -> ReportBundle:
    """Estimate every bucket, truck and dump; write reports when ``out_dir`` is given.

    Per-entity failures are collected as error rows and never stop the batch.
    """
    digs = sorted(digs, key=lambda d: d.dig_event_id)
    dig_by_id = {d.dig_event_id: d for d in digs}
    errors: list[tuple[str, str, str]] = []

    truck_cycles: dict[str, list[HaulCycle]] = defaultdict(list)
    for c in cycles:
        truck_cycles[c.truck_id].append(c)
    truck_ids = sorted(truck_cycles, key=sort_key)
    truck_dump = {t: truck_cycles[t][0].dump_id for t in truck_ids}
    truck_arrival = {t: max(c.timestamp for c in truck_cycles[t]) for t in truck_ids}
    truck_digs: dict[str, list[DigEvent]] = {}
    n_unestimated_cycles = 0
    for t in truck_ids:
        members = [dig_by_id[c.dig_event_id] for c in sorted(truck_cycles[t], key=lambda c: c.dig_event_id)]
        located = [d for d in members if d.position is not None]
        n_unestimated_cycles += len(members) - len(located)
        truck_digs[t] = located

    # phase 1: sphere/block geometry, each grid point computed exactly once
    probe = BucketEstimator(model, config)
    keys = sorted({k for d in digs for k in probe.cell_keys(d)})
    with _Runner(config.workers, model, config) as runner:
        cells: dict = {}
        for part in runner.map(_cells_task, _chunks(keys, CELL_CHUNK)):
            cells.update(part)
    log.info("geometry for %d grid points", len(cells))

    with _Runner(config.workers, model, config, cells) as runner:
        buckets: list[BucketEstimate] = []
        for part in runner.map(_bucket_task, _chunks(digs, BUCKET_CHUNK)):
            for r in part:
                (buckets if isinstance(r, BucketEstimate) else errors).append(r)
        failed = {b[1] for b in errors if b[0] == "bucket"}

        truck_items = []
        for t in truck_ids:
            if not truck_digs[t]:
                errors.append(("truck", t, "no bucket with a recorded dig position"))
            elif any(str(d.dig_event_id) in failed for d in truck_digs[t]):
                errors.append(("truck", t, "constituent bucket could not be estimated"))
            else:
                truck_items.append((t, truck_digs[t]))
        trucks: list[TruckEstimate] = []
        for part in runner.map(_truck_task, _chunks(truck_items, TRUCK_CHUNK)):
            for r in part:
                (trucks if isinstance(r, TruckEstimate) else errors).append(r)
        truck_ok = {t.truck_id: t for t in trucks}

        dump_members: dict[str, list[str]] = defaultdict(list)
        for t in truck_ids:
            dump_members[truck_dump[t]].append(t)
        dump_ids = sorted(dump_members, key=sort_key)
        dump_items = []
        for dmp in dump_ids:
            ok = [t for t in dump_members[dmp] if t in truck_ok]
            if ok:
                dump_items.append((dmp, {t: truck_digs[t] for t in ok}))
            else:
                errors.append(("dump", dmp, "no estimated truck"))
        dumps: list[DumpEstimate] = []
        for r in runner.map(_dump_task, dump_items):
            (dumps if isinstance(r, DumpEstimate) else errors).append(r)

    t0 = min(truck_arrival.values()) if truck_arrival else 0.0
    for dmp in dump_ids:
        arrivals = {t: truck_arrival[t] for t in dump_members[dmp] if t in truck_ok}
        for k, start, members in window_groups(arrivals, config.window_seconds, t0):
            dumps.append(
                estimate_dump_window([truck_ok[t].matched for t in sorted(members, key=sort_key)], dmp, k, start)
            )
    dumps.sort(key=lambda d: (sort_key(d.dump_id), d.mode, d.window_index))

    correlated = [d for d in dumps if d.mode == "correlated"]
    window = [d for d in dumps if d.mode == "window"]
    summary = {
        "stages": {
            "bucket": _stage([b.matched for b in buckets]),
            "truck": _stage([t.matched for t in trucks]),
            "dump_correlated": _stage([d.matched for d in correlated]),
            "dump_window": _stage([d.matched for d in window]),
        },
        "counts": {
            "digs": len(digs),
            "buckets_estimated": len(buckets),
            "trucks": len(truck_ids),
            "trucks_estimated": len(trucks),
            "dumps": len(dump_ids),
            "errors": len(errors),
            "unestimated_cycles": n_unestimated_cycles,
            "renormalized_locations": int(sum(b.n_renormalized for b in buckets)),
            "grid_points": len(cells),
        },
        # worker count is left out: reports must not depend on it
        "config": {k: v for k, v in config.to_dict().items() if k != "workers"},
    }
    bundle = ReportBundle(buckets, trucks, dumps, errors, summary)

    if config.plot_buckets:
        est = BucketEstimator(model, config)
        est.preload(cells)
        for bid in config.plot_buckets:
            if bid not in dig_by_id:
                errors.append(("plot", str(bid), "unknown dig_event_id"))
                continue
            try:
                bundle.plot_estimates[bid] = est.estimate(dig_by_id[bid], retain_components=True)
            except EstimationError as exc:
                errors.append(("plot", str(bid), exc.reason))
        summary["counts"]["errors"] = len(errors)

    if out_dir is not None:
        write_reports(bundle, out_dir, truck_dump, config)
    return bundle


def write_reports(bundle: ReportBundle, out_dir, truck_dump: dict[str, str], config: PipelineConfig) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "buckets": out / "buckets.csv",
        "trucks": out / "trucks.csv",
        "dumps": out / "dumps.csv",
        "errors": out / "errors.csv",
        "summary": out / "summary.json",
    }
    write_table(
        paths["buckets"], BUCKET_COLUMNS,
        ([b.dig_event_id, b.matched.mean, b.std, b.n_components] for b in bundle.buckets),
    )
    write_table(
        paths["trucks"], TRUCK_COLUMNS,
        ([t.truck_id, truck_dump[t.truck_id], t.matched.mean, t.std, t.n_buckets, t.n_simulations]
         for t in sorted(bundle.trucks, key=lambda t: sort_key(t.truck_id))),
    )
    write_table(
        paths["dumps"], DUMP_COLUMNS,
        ([d.dump_id, d.mode, d.window_index, d.window_start, d.matched.mean, d.std, d.n_trucks,
          d.n_buckets if d.mode == "correlated" else None,
          d.n_simulations if d.mode == "correlated" else None]
         for d in bundle.dumps),
    )
    errors = sorted(bundle.errors, key=lambda e: (e[0], sort_key(e[1])))
    write_table(paths["errors"], ERROR_COLUMNS, errors)
    paths["summary"].write_text(json.dumps(bundle.summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    for bid, est in sorted(bundle.plot_estimates.items()):
        plot_dir = out / "plots"
        plot_dir.mkdir(exist_ok=True)
        paths[f"plot_{bid}"] = emit_plot_data(est, plot_dir / f"bucket_{bid}.csv", config.plot_points)
    bundle.paths = paths
    return paths
