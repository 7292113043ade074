"""CSV schemas for block models, dig events and haul cycles, plus report writers."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .blocks import BlockModel
from .errors import DataError, LoadError
from .records import DigEvent, HaulCycle

BLOCK_COLUMNS = ("id", "x", "y", "z", "dx", "dy", "dz", "mean_fe", "std_fe", "bench")
DIG_COLUMNS = ("dig_event_id", "x", "y", "z", "bench", "timestamp")
CYCLE_COLUMNS = ("dig_event_id", "truck_id", "dump_id", "timestamp")


def fmt(value) -> str:
    """Output number format: 9 significant digits."""
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".9g")


def _exact(value: float) -> str:
    # shortest repr that round-trips; used for input files only
    return repr(float(value))


def _rows(path: Path, columns: Sequence[str]):
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise LoadError(f"cannot open: {exc.strerror}", path) from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise LoadError("missing header", path, 1)
        header = [h.strip() for h in header]
        if tuple(header) != tuple(columns):
            raise LoadError(f"header {header} does not match {list(columns)}", path, 1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(columns):
                raise LoadError(f"expected {len(columns)} fields, got {len(row)}", path, lineno)
            yield lineno, dict(zip(columns, (c.strip() for c in row)))


def _float(text: str, name: str, path, lineno: int) -> float:
    try:
        v = float(text)
    except ValueError:
        raise LoadError(f"{name}: not a number: {text!r}", path, lineno) from None
    if not math.isfinite(v):
        raise LoadError(f"{name}: non-finite value {text!r}", path, lineno)
    return v


def _int(text: str, name: str, path, lineno: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise LoadError(f"{name}: not an integer: {text!r}", path, lineno) from None


def _text(text: str, name: str, path, lineno: int) -> str:
    if not text:
        raise LoadError(f"{name}: empty value", path, lineno)
    return text


def read_blocks(path) -> BlockModel:
    path = Path(path)
    ids, cent, dims, means, stds, benches = [], [], [], [], [], []
    seen: dict[int, int] = {}
    for lineno, r in _rows(path, BLOCK_COLUMNS):
        bid = _int(r["id"], "id", path, lineno)
        if bid in seen:
            raise LoadError(f"duplicate block id {bid} (first on line {seen[bid]})", path, lineno)
        seen[bid] = lineno
        xyz = [_float(r[k], k, path, lineno) for k in ("x", "y", "z")]
        d = [_float(r[k], k, path, lineno) for k in ("dx", "dy", "dz")]
        if min(d) <= 0:
            raise LoadError("block dims must be positive", path, lineno)
        m = _float(r["mean_fe"], "mean_fe", path, lineno)
        s = _float(r["std_fe"], "std_fe", path, lineno)
        if not 0 <= m <= 100:
            raise LoadError(f"mean_fe {m} outside [0, 100]", path, lineno)
        if s < 0:
            raise LoadError("std_fe must be >= 0", path, lineno)
        ids.append(bid)
        cent.append(xyz)
        dims.append(d)
        means.append(m)
        stds.append(s)
        benches.append(_text(r["bench"], "bench", path, lineno))
    try:
        return BlockModel(ids, np.array(cent).reshape(-1, 3), np.array(dims).reshape(-1, 3), means, stds, benches)
    except DataError as exc:
        raise LoadError(str(exc), path) from exc


def read_digs(path) -> list[DigEvent]:
    """Dig events; a row with all of x, y, z empty is a sensor dropout."""
    path = Path(path)
    out = []
    seen: dict[int, int] = {}
    for lineno, r in _rows(path, DIG_COLUMNS):
        did = _int(r["dig_event_id"], "dig_event_id", path, lineno)
        if did in seen:
            raise LoadError(f"duplicate dig_event_id {did} (first on line {seen[did]})", path, lineno)
        seen[did] = lineno
        coords = (r["x"], r["y"], r["z"])
        if all(not c for c in coords):
            pos = None
        else:
            pos = tuple(_float(r[k], k, path, lineno) for k in ("x", "y", "z"))
        ts = _float(r["timestamp"], "timestamp", path, lineno)
        out.append(DigEvent(did, pos, _text(r["bench"], "bench", path, lineno), ts))
    return out


def read_cycles(path) -> list[HaulCycle]:
    path = Path(path)
    out = []
    seen: dict[int, int] = {}
    for lineno, r in _rows(path, CYCLE_COLUMNS):
        did = _int(r["dig_event_id"], "dig_event_id", path, lineno)
        if did in seen:
            raise LoadError(f"dig_event_id {did} already loaded on line {seen[did]}", path, lineno)
        seen[did] = lineno
        ts = _float(r["timestamp"], "timestamp", path, lineno)
        if ts < 0:
            raise LoadError("timestamp must be >= 0", path, lineno)
        out.append(
            HaulCycle(did, _text(r["truck_id"], "truck_id", path, lineno), _text(r["dump_id"], "dump_id", path, lineno), ts)
        )
    return out


def validate_links(model: BlockModel, digs: Sequence[DigEvent], cycles: Sequence[HaulCycle], paths=(None, None)) -> None:
    """Cross-file checks: known benches, known dig ids, one dump per truck."""
    dig_path, cycle_path = paths
    benches = set(model.benches)
    for d in digs:
        if len(model) and d.bench_id not in benches:
            raise LoadError(f"dig {d.dig_event_id} references unknown bench {d.bench_id!r}", dig_path)
    known = {d.dig_event_id for d in digs}
    dump_of: dict[str, str] = {}
    for c in cycles:
        if c.dig_event_id not in known:
            raise LoadError(f"cycle references unknown dig_event_id {c.dig_event_id}", cycle_path)
        prev = dump_of.setdefault(c.truck_id, c.dump_id)
        if prev != c.dump_id:
            raise LoadError(f"truck {c.truck_id} sent to both {prev} and {c.dump_id}", cycle_path)


def load_inputs(blocks_path, digs_path, cycles_path) -> tuple[BlockModel, list[DigEvent], list[HaulCycle]]:
    """Read and cross-validate the three input files."""
    model = read_blocks(blocks_path)
    digs = read_digs(digs_path)
    cycles = read_cycles(cycles_path)
    validate_links(model, digs, cycles, (digs_path, cycles_path))
    return model, digs, cycles


def _write(path, columns: Sequence[str], rows: Iterable[Sequence[str]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        w.writerows(rows)


def write_blocks(model: BlockModel, path) -> None:
    order = np.argsort(model.ids, kind="stable")
    _write(
        path,
        BLOCK_COLUMNS,
        (
            [str(int(model.ids[r])), *map(_exact, model.centroids[r]), *map(_exact, model.dims[r]),
             _exact(model.means[r]), _exact(model.stds[r]), str(model.bench_ids[r])]
            for r in order
        ),
    )


def write_digs(digs: Sequence[DigEvent], path) -> None:
    _write(
        path,
        DIG_COLUMNS,
        (
            [str(d.dig_event_id), *(map(_exact, d.position) if d.position else ("", "", "")),
             d.bench_id, _exact(d.timestamp)]
            for d in digs
        ),
    )


def write_cycles(cycles: Sequence[HaulCycle], path) -> None:
    _write(path, CYCLE_COLUMNS, ([str(c.dig_event_id), c.truck_id, c.dump_id, _exact(c.timestamp)] for c in cycles))


def write_table(path, columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Report CSV: UTF-8, LF endings, numbers at 9 significant digits."""
    _write(path, columns, ([v if isinstance(v, str) else fmt(v) for v in row] for row in rows))


def read_table(path) -> tuple[list[str], list[dict[str, str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return list(reader.fieldnames or []), list(reader)
