"""Command-line entry point: ``synth``, ``estimate``, ``oracle`` and ``plot``.

Exit codes: 0 success, 1 input load error, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .bucket import BucketEstimator
from .config import PipelineConfig, load_config
from .errors import ConfigError, EstimationError, LoadError
from .haul import estimate_truck
from .io import load_inputs, read_blocks, read_digs, write_blocks, write_cycles, write_digs, write_table
from .pipeline import emit_plot_data, run_pipeline
from .synth import generate_scenario, mc_oracle_bucket, mc_oracle_truck, reference_spec, replay_spec

log = logging.getLogger("excavgrade")

EXIT_OK, EXIT_LOAD, EXIT_CONFIG = 0, 1, 2
PRESETS = {"reference": reference_spec, "replay": replay_spec}


def _add_inputs(p: argparse.ArgumentParser, cycles: bool = True) -> None:
    p.add_argument("--blocks", required=True, type=Path, help="block model CSV")
    p.add_argument("--digs", required=True, type=Path, help="dig events CSV")
    if cycles:
        p.add_argument("--cycles", required=True, type=Path, help="haul cycles CSV")


def _add_config(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON config file; flags override it")
    p.add_argument("--r-xy-neighbor", type=float)
    p.add_argument("--r-xy-sampling", type=float)
    p.add_argument("--grid-interval", type=float)
    p.add_argument("--bucket-volume", type=float)
    p.add_argument("--weight-mode", choices=("equal", "idw2"))
    p.add_argument("--window-seconds", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config)
    try:
        return cfg.with_overrides(
            r_xy_neighbor=args.r_xy_neighbor,
            r_xy_sampling=args.r_xy_sampling,
            grid_interval=args.grid_interval,
            bucket_volume=args.bucket_volume,
            weight_mode=args.weight_mode,
            window_seconds=args.window_seconds,
            seed=args.seed,
            workers=args.workers,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="excavgrade", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic two-region scenario")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--preset", choices=sorted(PRESETS), default="reference")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("estimate", help="run the full bucket/truck/dump pipeline")
    _add_inputs(p)
    _add_config(p)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--plot-bucket", type=int, action="append", default=None,
                   help="also emit pdf/cdf data for this dig id (repeatable)")

    p = sub.add_parser("oracle", help="Monte-Carlo check of selected buckets and trucks")
    _add_inputs(p)
    _add_config(p)
    p.add_argument("--bucket", type=int, action="append", default=[])
    p.add_argument("--truck", action="append", default=[])
    p.add_argument("--n-samples", type=int, default=100_000)
    p.add_argument("--out", type=Path, help="CSV file for the comparison table")

    p = sub.add_parser("plot", help="pdf/cdf plot data for individual buckets")
    _add_inputs(p, cycles=False)
    _add_config(p)
    p.add_argument("--bucket", type=int, action="append", required=True)
    p.add_argument("--out", required=True, type=Path)
    return parser


def _cmd_synth(args) -> int:
    spec = PRESETS[args.preset](**({} if args.seed is None else {"seed": args.seed}))
    model, digs, cycles = generate_scenario(spec)
    args.out.mkdir(parents=True, exist_ok=True)
    write_blocks(model, args.out / "blocks.csv")
    write_digs(digs, args.out / "digs.csv")
    write_cycles(cycles, args.out / "cycles.csv")
    kernel = spec.kernel
    cfg = PipelineConfig(kernel=kernel)
    (args.out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2) + "\n", encoding="utf-8")
    print(f"wrote {len(model)} blocks, {len(digs)} digs, {len(cycles)} cycles to {args.out}")
    return EXIT_OK


def _cmd_estimate(args) -> int:
    cfg = _config(args)
    if args.plot_bucket:
        cfg = cfg.with_overrides(plot_buckets=tuple(args.plot_bucket))
    model, digs, cycles = load_inputs(args.blocks, args.digs, args.cycles)
    bundle = run_pipeline(cfg, model, digs, cycles, args.out)
    st = bundle.summary["stages"]
    for name in ("bucket", "truck", "dump_correlated", "dump_window"):
        s = st[name]
        print(f"{name:16s} n={s['count']:<6d} mean={s['mean']} mean_std={s['mean_std']}")
    print(f"errors: {len(bundle.errors)}; reports in {args.out}")
    return EXIT_OK


def _cmd_oracle(args) -> int:
    cfg = _config(args)
    model, digs, cycles = load_inputs(args.blocks, args.digs, args.cycles)
    by_id = {d.dig_event_id: d for d in digs}
    est = BucketEstimator(model, cfg)
    rows = []
    for bid in args.bucket:
        if bid not in by_id:
            raise LoadError(f"unknown dig_event_id {bid}")
        try:
            a = est.estimate(by_id[bid])
            o = mc_oracle_bucket(by_id[bid], model, None, cfg, args.n_samples, cfg.seed, est)
        except EstimationError as exc:
            print(f"bucket {bid}: {exc.reason}", file=sys.stderr)
            continue
        rows.append(["bucket", str(bid), a.matched.mean, a.std, o.mean, o.std, o.se_mean, o.se_std])
    members: dict[str, list] = {}
    for c in sorted(cycles, key=lambda c: c.dig_event_id):
        members.setdefault(c.truck_id, []).append(by_id[c.dig_event_id])
    for tid in args.truck:
        if tid not in members:
            raise LoadError(f"unknown truck_id {tid}")
        located = [d for d in members[tid] if d.position is not None]
        try:
            a = estimate_truck(tid, located, model, None, cfg, est)
            o = mc_oracle_truck(located, model, None, cfg, args.n_samples, cfg.seed, est)
        except EstimationError as exc:
            print(f"truck {tid}: {exc.reason}", file=sys.stderr)
            continue
        rows.append(["truck", tid, a.matched.mean, a.std, o.mean, o.std, o.se_mean, o.se_std])
    cols = ("entity", "id", "analytic_mean", "analytic_std", "oracle_mean", "oracle_std", "se_mean", "se_std")
    if args.out:
        write_table(args.out, cols, rows)
    print(",".join(cols))
    for r in rows:
        print(",".join(v if isinstance(v, str) else format(v, ".9g") for v in r))
    return EXIT_OK


def _cmd_plot(args) -> int:
    cfg = _config(args)
    model = read_blocks(args.blocks)
    by_id = {d.dig_event_id: d for d in read_digs(args.digs)}
    est = BucketEstimator(model, cfg)
    args.out.mkdir(parents=True, exist_ok=True)
    for bid in args.bucket:
        if bid not in by_id:
            raise LoadError(f"unknown dig_event_id {bid}")
        e = est.estimate(by_id[bid], retain_components=True)
        path = emit_plot_data(e, args.out / f"bucket_{bid}.csv", cfg.plot_points)
        print(f"bucket {bid}: mean={e.matched.mean:.4f} std={e.std:.4f} components={e.n_components} -> {path}")
    return EXIT_OK


COMMANDS = {"synth": _cmd_synth, "estimate": _cmd_estimate, "oracle": _cmd_oracle, "plot": _cmd_plot}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LoadError as exc:
        print(f"load error: {exc}", file=sys.stderr)
        return EXIT_LOAD
    except EstimationError as exc:
        print(f"estimation error: {exc}", file=sys.stderr)
        return EXIT_LOAD


if __name__ == "__main__":
    sys.exit(main())
