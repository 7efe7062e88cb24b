"""``wsnholes`` command line.

Exit codes: 0 success, 1 usage error, 2 runtime failure, 3 every grid cell failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .boundary import BoundaryError, write_id_list
from .layout import run_kk_ms_ds
from .metrics import CSV_FIELDS, write_metrics_csv
from .pipeline import (
    ConfigError,
    ExperimentConfig,
    detect_on_positions,
    layout_sensing_radius,
    run_grid,
    validate_external,
    with_overrides,
)
from .raster import RasterError, export_image, fit_transform, render_coverage
from .topology import (
    TopologyError,
    generate_topology,
    read_edge_list,
    read_positions,
    write_edge_list,
    write_positions,
)

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_ALL_FAILED = 0, 1, 2, 3

log = logging.getLogger("wsnholes")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=default, help="YAML/JSON experiment config")
    p.add_argument("--seed", type=int, default=default, help="RNG seed (grid: run only this seed)")
    p.add_argument("--out", default=default, help="output directory")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wsnholes", description=__doc__.splitlines()[0])
    _global_flags(parser, suppress=False)
    common = _Parser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("gen", parents=[common], help="generate a topology with planted voids")
    p.add_argument("-n", "--nodes", type=int, required=True)
    p.add_argument("-d", "--degree", type=float, required=True)

    p = sub.add_parser("layout", parents=[common], help="lay out a topology, writing snapshots")
    p.add_argument("topology")

    p = sub.add_parser("render", parents=[common], help="render a placement's coverage to PNG")
    p.add_argument("positions")
    p.add_argument("--topology", help="edge list; sizes the sensing radius from the layout")
    p.add_argument("--rs", type=float, help="sensing radius in world units")

    p = sub.add_parser("detect", parents=[common], help="detect holes and boundary nodes of a placement")
    p.add_argument("positions")
    p.add_argument("--topology", help="edge list; sizes the sensing radius from the layout")
    p.add_argument("--rs", type=float, help="sensing radius in world units")

    p = sub.add_parser("validate", parents=[common], help="score an external annotation or blue mask")
    p.add_argument("detections", help="annotation .json or mask image")
    p.add_argument("--layout", required=True)
    p.add_argument("--topology", required=True)
    p.add_argument("--truth", required=True, help="ground-truth annotation .json")
    p.add_argument("--degree", type=float)
    p.add_argument("--snapshot-iter", default="NA")

    sub.add_parser("grid", parents=[common], help="run the full experiment grid")
    return parser


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    return with_overrides(cfg, None, args.out)


def _out(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _rs(args, positions, cfg) -> float:
    if args.rs is not None:
        return args.rs
    if args.topology is None:
        raise UsageError("give --rs or --topology to size the sensing radius")
    return layout_sensing_radius(read_edge_list(args.topology), positions, cfg)


def cmd_gen(args, cfg) -> int:
    out = _out(args)
    seed = args.seed if args.seed is not None else 0
    t, p = generate_topology(args.nodes, args.degree, cfg.holes, cfg.sensing_ratio, seed)
    write_edge_list(t, out / "topology.txt")
    write_positions(p.positions, out / "true_positions.csv")
    info = {
        "n": t.node_count,
        "edges": len(t.edges),
        "seed": seed,
        "communication_range": p.communication_range,
        "sensing_range": p.sensing_range,
        "voids": [{"center": list(v.center), "radius": v.radius} for v in p.voids],
    }
    with open(out / "placement.json", "w") as fh:
        json.dump(info, fh, indent=1)
        fh.write("\n")
    print(f"{t.node_count} nodes, {len(t.edges)} edges, R_S={p.sensing_range:.6g} -> {out}")
    return EXIT_OK


def cmd_layout(args, cfg) -> int:
    out = _out(args)
    t = read_edge_list(args.topology)
    seed = args.seed if args.seed is not None else 0
    res = run_kk_ms_ds(t, cfg.layout, seed, cfg.schedule(t.node_count))
    names = []
    for it, state in res.snapshots:
        name = f"layout_iter{it}.csv"
        write_positions(res.placed_positions(state), out / name)
        names.append(name)
    manifest = {
        "seed": seed,
        "params": asdict(res.params),
        "start_node": res.start_node,
        "snapshot_iterations": [it for it, _ in res.snapshots],
        "final_r": res.final_r if np.isfinite(res.final_r) else repr(res.final_r),
        "converged": res.converged,
        "flag": res.flag,
        "files": names,
    }
    with open(out / "layout_manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(f"{len(names)} snapshots, final r={res.final_r:.4g}, flag={res.flag} -> {out}")
    return EXIT_OK


def cmd_render(args, cfg) -> int:
    out = _out(args)
    pos = read_positions(args.positions)
    rs = _rs(args, pos, cfg)
    sub = pos[np.isfinite(pos).all(axis=1)]
    tr = fit_transform(sub, cfg.width, cfg.height, cfg.margin)
    img = render_coverage(sub, tr, rs)
    path = out / (Path(args.positions).stem + ".png")
    export_image(img, path)
    print(path)
    return EXIT_OK


def cmd_detect(args, cfg) -> int:
    out = _out(args)
    pos = read_positions(args.positions)
    ev = detect_on_positions(pos, _rs(args, pos, cfg), cfg, "coverage.png")
    export_image(ev.image, out / "coverage.png", [("detected", [h.pixels for h in ev.annotation.holes])])
    ev.annotation.save(out / "annotation.json")
    write_id_list(ev.ids, out / "boundary_ids.txt")
    print(f"{len(ev.annotation.holes)} holes, {len(ev.ids)} boundary nodes, {ev.detect_ms:.1f} ms -> {out}")
    return EXIT_OK


def cmd_validate(args, cfg) -> int:
    row = validate_external(
        args.detections, args.layout, args.topology, args.truth, cfg,
        d=args.degree, seed=args.seed if args.seed is not None else "NA",
        snapshot_iter=args.snapshot_iter,
    )
    if args.out:
        write_metrics_csv([row], _out(args) / "validate_metrics.csv")
    w = csv.DictWriter(sys.stdout, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    w.writerow(row)
    return EXIT_OK


def cmd_grid(args, cfg) -> int:
    cfg = with_overrides(cfg, args.seed, None)
    res = run_grid(cfg)
    failed = [c for c in res.cells if c.status != "ok"]
    for c in failed:
        print(f"cell n={c.n} d={c.d:g} seed={c.seed} failed: {c.error}", file=sys.stderr)
    print(f"{len(res.cells) - len(failed)}/{len(res.cells)} cells ok, {len(res.rows)} rows -> {res.directory}")
    return EXIT_ALL_FAILED if res.all_failed else EXIT_OK


COMMANDS = {
    "gen": cmd_gen,
    "layout": cmd_layout,
    "render": cmd_render,
    "detect": cmd_detect,
    "validate": cmd_validate,
    "grid": cmd_grid,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = _config(args)
        return COMMANDS[args.command](args, cfg)
    except (UsageError, ConfigError) as exc:
        print(f"wsnholes: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TopologyError, RasterError, BoundaryError, OSError, ValueError) as exc:
        print(f"wsnholes: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
