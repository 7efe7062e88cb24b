"""End-to-end experiment harness: one cell is (n, d, seed), a grid is many.

Cell layout on disk::

    <out>/n500_d6_s1/
        topology.txt
        manifest.json
        metrics.csv
        truth/positions.csv, coverage.png, annotation.json, boundary_ids.txt
        iter<k>/layout_iter<k>.csv, coverage.png, annotation.json, boundary_ids.txt

Everything except the ``created`` timestamp in ``manifest.json`` and the
``detect_ms`` column of the metrics files is a pure function of the config
and the seed.
"""

from __future__ import annotations

import json
import logging
import math
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .boundary import BoundaryError, boundary_node_ids, default_tolerance, write_id_list
from .detect import DEFAULT_A_MIN, Annotation, HoleRegion, detect_holes, trace_contour
from .layout import LayoutParams, run_kk_ms_ds
from .metrics import (
    CSV_FIELDS,
    NA,
    confusion_counts,
    metrics_row,
    parse_score,
    write_metrics_csv,
)
from .raster import (
    DEFAULT_MARGIN,
    DEFAULT_SIZE,
    DETECTED_BLUE,
    RasterError,
    export_image,
    extract_regions_by_color,
    fit_transform,
    load_rgb,
    render_coverage,
)
from .topology import (
    HoleSpec,
    Topology,
    TopologyError,
    generate_topology,
    read_edge_list,
    read_positions,
    write_edge_list,
    write_positions,
)

log = logging.getLogger(__name__)

# layout-side sensing radius: ratio * LAYOUT_RS_FACTOR * median edge length.
# In a unit-disk graph the median edge is about R_C / sqrt(2).
LAYOUT_RS_FACTOR = math.sqrt(2.0)
GEOMETRIC_BASE = 100
SUMMARY_FIELDS = ["n", "d", "cells", "failed", "mean_sensitivity", "mean_specificity"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    node_counts: tuple[int, ...] = (500, 1000, 2000)
    degrees: tuple[float, ...] = (6, 8, 10)
    holes: HoleSpec = field(default_factory=HoleSpec)
    sensing_ratio: float = 0.8  # R_S = ratio * R_C on true positions
    layout_rs_factor: float = LAYOUT_RS_FACTOR
    layout: LayoutParams = field(default_factory=LayoutParams)
    width: int = DEFAULT_SIZE
    height: int = DEFAULT_SIZE
    margin: int = DEFAULT_MARGIN
    a_min: int = DEFAULT_A_MIN
    tol: float | None = None  # pixels; None means rs_pixels + slack
    snapshots: tuple[int, ...] | str = (1000, 5000, 20000)
    seeds: tuple[int, ...] = (1,)
    out: str = "runs"
    jobs: int = 1

    def __post_init__(self):
        if not self.node_counts or not self.degrees or not self.seeds:
            raise ConfigError("node_counts, degrees and seeds must be non-empty")
        if any(n < 2 for n in self.node_counts):
            raise ConfigError("node counts must be at least 2")
        if any(d <= 0 for d in self.degrees):
            raise ConfigError("degrees must be positive")
        if self.sensing_ratio <= 0 or self.layout_rs_factor <= 0:
            raise ConfigError("sensing radius factors must be positive")
        if self.width <= 2 * self.margin or self.height <= 2 * self.margin:
            raise ConfigError("canvas too small for the margin")
        if self.a_min < 1:
            raise ConfigError("a_min must be at least 1")
        if self.tol is not None and self.tol < 0:
            raise ConfigError("tol must be nonnegative")
        if isinstance(self.snapshots, str) and self.snapshots != "geometric":
            raise ConfigError("snapshots must be a list of iterations or 'geometric'")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")

    @property
    def cells(self) -> list[tuple[int, float, int]]:
        return [(n, d, s) for n in self.node_counts for d in self.degrees for s in self.seeds]

    def schedule(self, n: int) -> list[int]:
        if self.snapshots != "geometric":
            return sorted(set(int(i) for i in self.snapshots))
        cap = self.layout.resolve(n).max_iterations
        out, k = [], GEOMETRIC_BASE
        while k <= cap:
            out.append(k)
            k *= 2
        return out

    def to_dict(self, execution: bool = True) -> dict:
        """Config as plain data; ``execution=False`` drops where and how the
        run executes (``out``, ``jobs``), which never changes results."""
        out = {
            "node_counts": list(self.node_counts),
            "degrees": list(self.degrees),
            "holes": asdict(self.holes),
            "rs_rule": {"ratio": self.sensing_ratio, "layout_factor": self.layout_rs_factor},
            "layout": asdict(self.layout),
            "canvas": {"width": self.width, "height": self.height, "margin": self.margin},
            "a_min": self.a_min,
            "tol": self.tol,
            "snapshots": self.snapshots if isinstance(self.snapshots, str) else list(self.snapshots),
            "seeds": list(self.seeds),
        }
        if execution:
            out.update(out=self.out, jobs=self.jobs)
        return out

    @classmethod
    def from_dict(cls, data: dict | None) -> "ExperimentConfig":
        data = dict(data or {})
        kw: dict = {}
        try:
            for key in ("node_counts", "seeds"):
                if key in data:
                    kw[key] = tuple(int(v) for v in _as_list(data.pop(key)))
            if "degrees" in data:
                kw["degrees"] = tuple(float(v) for v in _as_list(data.pop("degrees")))
            if "holes" in data:
                kw["holes"] = _sub(HoleSpec, data.pop("holes"), "holes")
            if "layout" in data:
                kw["layout"] = _sub(LayoutParams, data.pop("layout"), "layout")
            if "rs_rule" in data:
                rule = dict(data.pop("rs_rule") or {})
                if "ratio" in rule:
                    kw["sensing_ratio"] = float(rule.pop("ratio"))
                if "layout_factor" in rule:
                    kw["layout_rs_factor"] = float(rule.pop("layout_factor"))
                if rule:
                    raise ConfigError(f"unknown rs_rule keys: {sorted(rule)}")
            if "canvas" in data:
                canvas = dict(data.pop("canvas") or {})
                for key in ("width", "height", "margin"):
                    if key in canvas:
                        kw[key] = int(canvas.pop(key))
                if canvas:
                    raise ConfigError(f"unknown canvas keys: {sorted(canvas)}")
            if "snapshots" in data:
                snap = data.pop("snapshots")
                kw["snapshots"] = snap if isinstance(snap, str) else tuple(int(v) for v in _as_list(snap))
            for key, conv in (("a_min", int), ("out", str), ("jobs", int)):
                if key in data:
                    kw[key] = conv(data.pop(key))
            if "tol" in data:
                tol = data.pop("tol")
                kw["tol"] = None if tol is None else float(tol)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad config value: {exc}") from exc
        if data:
            raise ConfigError(f"unknown config keys: {sorted(data)}")
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        """YAML or JSON (JSON is valid YAML)."""
        try:
            with open(path) as fh:
                data = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from exc
        if data is not None and not isinstance(data, dict):
            raise ConfigError("config must be a mapping")
        return cls.from_dict(data)


def _as_list(v):
    return v if isinstance(v, (list, tuple)) else [v]


def _sub(cls, data, name):
    data = dict(data or {})
    known = {f.name for f in fields(cls)}
    extra = sorted(set(data) - known)
    if extra:
        raise ConfigError(f"unknown {name} keys: {extra}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {name} config: {exc}") from exc


def tool_versions() -> dict:
    import matplotlib
    import numba
    import PIL
    import scipy

    return {
        "wsnholes": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
        "Pillow": PIL.__version__,
        "matplotlib": matplotlib.__version__,
        "pyyaml": yaml.__version__,
    }


def cell_name(n: int, d: float, seed: int) -> str:
    return f"n{n}_d{d:g}_s{seed}"


# -- evaluation helpers ------------------------------------------------------


def layout_sensing_radius(t: Topology, positions, config: ExperimentConfig) -> float:
    """World-unit sensing radius for an estimated layout.

    Layouts have no physical scale, so the radius is tied to the layout's
    own median edge length among laid-out nodes (NaN rows are skipped).
    """
    pos = np.asarray(positions, dtype=float)
    e = t.edge_array
    if len(e):
        ok = np.isfinite(pos).all(axis=1)
        e = e[ok[e[:, 0]] & ok[e[:, 1]]]
    if len(e) == 0:
        raise RasterError("no laid-out edges to size the sensing radius")
    lengths = np.hypot(*(pos[e[:, 0]] - pos[e[:, 1]]).T)
    return float(config.sensing_ratio * config.layout_rs_factor * np.median(lengths))


@dataclass
class Evaluation:
    annotation: Annotation
    image: object  # CoverageImage
    ids: frozenset[int]
    inside: frozenset[int]
    detect_ms: float
    rs_world: float


def detect_on_positions(positions, rs_world: float, config: ExperimentConfig, image_path: str = "") -> Evaluation:
    """Render, detect and find boundary nodes; NaN rows are left out.

    Returned IDs index into ``positions``.
    """
    pos = np.asarray(positions, dtype=float)
    idx = np.flatnonzero(np.isfinite(pos).all(axis=1))
    sub = pos[idx]
    tr = fit_transform(sub, config.width, config.height, config.margin)
    img = render_coverage(sub, tr, rs_world)
    tol = config.tol if config.tol is not None else default_tolerance(img.rs_pixels)
    t0 = time.perf_counter()
    ann = detect_holes(img, config.a_min, image_path)
    br = boundary_node_ids(ann, sub, tr, tol)
    dt = (time.perf_counter() - t0) * 1000.0
    for hole, ids in zip(ann.holes, br.per_hole):
        hole.boundary_node_ids = tuple(sorted(int(idx[i]) for i in ids))
    ids = frozenset(int(idx[i]) for i in br.ids)
    inside = frozenset(int(idx[i]) for i in br.inside)
    return Evaluation(ann, img, ids, inside, dt, rs_world)


def _write_eval(ev: Evaluation, folder: Path, overlay: str) -> list[str]:
    folder.mkdir(parents=True, exist_ok=True)
    export_image(ev.image, folder / "coverage.png", [(overlay, [h.pixels for h in ev.annotation.holes])])
    ev.annotation.save(folder / "annotation.json")
    write_id_list(ev.ids, folder / "boundary_ids.txt")
    return ["coverage.png", "annotation.json", "boundary_ids.txt"]


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _write_manifest(path: Path, manifest: dict) -> None:
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x


# -- cells and grids ---------------------------------------------------------


@dataclass
class CellResult:
    n: int
    d: float
    seed: int
    directory: Path
    status: str  # "ok" or "failed"
    rows: list[dict] = field(default_factory=list)
    error: str | None = None


def run_pipeline(config: ExperimentConfig, n: int, d: float, seed: int, out: Path | str | None = None) -> CellResult:
    """Run one cell.  Generation and runtime failures are recorded, not raised."""
    out_root = Path(out if out is not None else config.out)
    folder = out_root / cell_name(n, d, seed)
    folder.mkdir(parents=True, exist_ok=True)
    manifest: dict = {
        "created": _now(),
        "cell": {"n": n, "d": d, "seed": seed},
        "config": config.to_dict(execution=False),
        "versions": tool_versions(),
    }
    result = CellResult(n, d, seed, folder, "ok")
    try:
        _run_cell(config, n, d, seed, folder, manifest, result)
    except (TopologyError, RasterError, BoundaryError, ValueError) as exc:
        log.warning("cell %s failed: %s", cell_name(n, d, seed), exc)
        result.status, result.error, result.rows = "failed", str(exc), []
        manifest["error"] = str(exc)
    manifest["status"] = result.status
    write_metrics_csv(result.rows, folder / "metrics.csv")
    _write_manifest(folder / "manifest.json", manifest)
    return result


def _run_cell(config, n, d, seed, folder: Path, manifest: dict, result: CellResult) -> None:
    t, truth = generate_topology(n, d, config.holes, config.sensing_ratio, seed)
    write_edge_list(t, folder / "topology.txt")
    files = ["topology.txt"]
    manifest["generation"] = {
        "edges": len(t.edges),
        "average_degree": 2.0 * len(t.edges) / n,
        "communication_range": truth.communication_range,
        "sensing_range": truth.sensing_range,
        "voids": [{"center": list(v.center), "radius": v.radius} for v in truth.voids],
    }

    tdir = folder / "truth"
    tdir.mkdir(exist_ok=True)
    write_positions(truth.positions, tdir / "positions.csv")
    gt = detect_on_positions(truth.positions, truth.sensing_range, config, "coverage.png")
    files += ["truth/positions.csv"] + [f"truth/{f}" for f in _write_eval(gt, tdir, "truth")]
    manifest["truth"] = {
        "holes": len(gt.annotation.holes),
        "boundary_nodes": len(gt.ids),
        "rs_pixels": gt.image.rs_pixels,
        "nodes_inside_holes": sorted(gt.inside),
    }

    res = run_kk_ms_ds(t, config.layout, seed, config.schedule(n))
    params = asdict(res.params)
    manifest["layout"] = {
        "params": params,
        "start_node": res.start_node,
        "converged": res.converged,
        "flag": res.flag,
        "final_r": _jsonable(res.final_r),
        "iterations": res.final.iteration,
        "snapshot_iterations": [it for it, _ in res.snapshots],
    }

    snaps = []
    for it, state in res.snapshots:
        sdir = folder / f"iter{it}"
        sdir.mkdir(exist_ok=True)
        pos = res.placed_positions(state)
        write_positions(pos, sdir / f"layout_iter{it}.csv")
        files.append(f"iter{it}/layout_iter{it}.csv")
        rs = layout_sensing_radius(t, pos, config)
        ev = detect_on_positions(pos, rs, config, "coverage.png")
        files += [f"iter{it}/{f}" for f in _write_eval(ev, sdir, "detected")]
        c = confusion_counts(ev.ids, gt.ids, n)
        result.rows.append(metrics_row(n, d, seed, it, c, ev.detect_ms))
        snaps.append({
            "iteration": it,
            "laid_out": int(np.isfinite(pos).all(axis=1).sum()),
            "sensing_range": rs,
            "rs_pixels": ev.image.rs_pixels,
            "holes": len(ev.annotation.holes),
        })
    manifest["snapshots"] = snaps
    manifest["files"] = files + ["metrics.csv"]


def _cell_job(args):
    config, n, d, seed, out = args
    return run_pipeline(config, n, d, seed, out)


@dataclass
class GridResult:
    cells: list[CellResult]
    rows: list[dict]
    summary: list[dict]
    directory: Path

    @property
    def all_failed(self) -> bool:
        return all(c.status != "ok" for c in self.cells)


def summarize(cells: list[CellResult], config: ExperimentConfig) -> list[dict]:
    """Mean final-snapshot sensitivity/specificity per (n, d); NA scores skipped."""
    out = []
    for n in config.node_counts:
        for d in config.degrees:
            group = [c for c in cells if c.n == n and c.d == d]
            finals = [c.rows[-1] for c in group if c.status == "ok" and c.rows]
            row = {"n": n, "d": f"{d:g}", "cells": len(group), "failed": sum(c.status != "ok" for c in group)}
            for key in ("sensitivity", "specificity"):
                vals = [parse_score(r[key]) for r in finals]
                vals = [v for v in vals if v is not None]
                row[f"mean_{key}"] = f"{np.mean(vals):.6f}" if vals else NA
            out.append(row)
    return out


def run_grid(config: ExperimentConfig, out: Path | str | None = None, figures: bool = True) -> GridResult:
    """All cells of the config, then the aggregated CSV, summary and figures."""
    import csv

    out_root = Path(out if out is not None else config.out)
    out_root.mkdir(parents=True, exist_ok=True)
    jobs = [(config, n, d, s, out_root) for n, d, s in config.cells]
    if config.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(config.jobs, len(jobs), os.cpu_count() or 1)) as ex:
            cells = list(ex.map(_cell_job, jobs))
    else:
        cells = [_cell_job(j) for j in jobs]

    rows = [r for c in cells for r in c.rows]
    write_metrics_csv(rows, out_root / "metrics.csv")
    summary = summarize(cells, config)
    with open(out_root / "summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerows(summary)
    fig_files = []
    if figures:
        from .report import plot_snapshot_curves, plot_summary

        fig_dir = out_root / "figures"
        fig_dir.mkdir(exist_ok=True)
        plot_summary(summary, fig_dir / "summary.png")
        plot_snapshot_curves(rows, fig_dir / "snapshots.png")
        fig_files = ["figures/summary.png", "figures/snapshots.png"]
    _write_manifest(out_root / "manifest.json", {
        "created": _now(),
        "config": config.to_dict(execution=False),
        "jobs": config.jobs,
        "versions": tool_versions(),
        "cells": [
            {"name": cell_name(c.n, c.d, c.seed), "status": c.status, "error": c.error, "rows": len(c.rows)}
            for c in cells
        ],
        "files": ["metrics.csv", "summary.csv"] + fig_files,
    })
    return GridResult(cells, rows, summary, out_root)


# -- external detections -----------------------------------------------------


def load_detections(path) -> Annotation:
    """Annotation JSON, or an image whose blue (0, 0, 255) pixels mark holes."""
    path = Path(path)
    if path.suffix.lower() == ".json":
        try:
            return Annotation.load(path)
        except (OSError, json.JSONDecodeError) as exc:
            raise ValueError(f"cannot read annotation {path}: {exc}") from exc
    rgb = load_rgb(path)
    regions = extract_regions_by_color(rgb, DETECTED_BLUE)
    holes = [HoleRegion(pix, trace_contour(pix)) for pix in regions]
    return Annotation(rgb.shape[1], rgb.shape[0], holes, path.name)


def truth_ids(annotation: Annotation) -> frozenset[int]:
    out: set[int] = set()
    for h in annotation.holes:
        out.update(h.boundary_node_ids)
    return frozenset(out)


def validate_external(
    detections,
    layout_path,
    topology_path,
    truth_path,
    config: ExperimentConfig | None = None,
    d: float | None = None,
    seed: int | str = NA,
    snapshot_iter: int | str = NA,
) -> dict:
    """Score an externally produced detection against a stored ground truth.

    ``detections`` is an annotation JSON or a blue-mask image drawn on the
    same canvas the pipeline would use for ``layout_path``.
    """
    config = config or ExperimentConfig()
    t = read_edge_list(topology_path)
    pos = read_positions(layout_path)
    n = t.node_count
    if len(pos) != n:
        raise ValueError(f"layout has {len(pos)} nodes but the topology has {n}")
    gt = truth_ids(Annotation.load(truth_path))
    if any(not 0 <= i < n for i in gt):
        raise ValueError("ground-truth boundary IDs do not match the topology")

    idx = np.flatnonzero(np.isfinite(pos).all(axis=1))
    sub = pos[idx]
    tr = fit_transform(sub, config.width, config.height, config.margin)
    rs_px = layout_sensing_radius(t, pos, config) * tr.scale
    tol = config.tol if config.tol is not None else default_tolerance(rs_px)

    ann = load_detections(detections)
    t0 = time.perf_counter()
    br = boundary_node_ids(ann, sub, tr, tol)
    dt = (time.perf_counter() - t0) * 1000.0
    detected = {int(idx[i]) for i in br.ids}
    c = confusion_counts(detected, gt, n)
    d = d if d is not None else 2.0 * len(t.edges) / n
    return metrics_row(n, d, seed, snapshot_iter, c, dt)


def with_overrides(config: ExperimentConfig, seed: int | None = None, out: str | None = None) -> ExperimentConfig:
    kw = {}
    if seed is not None:
        kw["seeds"] = (int(seed),)
    if out is not None:
        kw["out"] = str(out)
    return replace(config, **kw) if kw else config


__all__ = [
    "CSV_FIELDS",
    "CellResult",
    "ConfigError",
    "Evaluation",
    "ExperimentConfig",
    "GridResult",
    "detect_on_positions",
    "layout_sensing_radius",
    "load_detections",
    "run_grid",
    "run_pipeline",
    "summarize",
    "validate_external",
    "with_overrides",
]
