"""Command line driver: ``dynavo run | eval | synth``.

Exit codes: 0 success, 2 usage or settings/script error, 3 data error,
4 tracking lost.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import shutil
import sys
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .datasets import Config, SequenceSource, load_generic, load_kitti
from .errors import (AssociationError, DatasetError, DegenerateGeometry, ImageSizeError, ScriptError,
                     SettingsError, TrackingLost)
from .evaluation import ALIGNMENTS, ape, associate, index_pairs, write_report
from .mapping import VoxelMap, build_local_cloud, export_ply
from .odometry import Diagnostics, Tracker
from .synth import demo_script_path, load_script, render_sequence
from .trajectory import Trajectory, read_trajectory, write_kitti, write_tum

log = logging.getLogger("dynavo")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_LOST = 0, 2, 3, 4

TIMING_KEYS = ("orb", "mask", "flow", "epipolar", "stereo", "pose", "map", "total")


@dataclass
class RunResult:
    trajectory: Trajectory
    diagnostics: list
    voxel_map: VoxelMap | None
    fps: float
    out_dir: Path | None = None


def run_pipeline(source: SequenceSource, config: Config | None = None, *, filter_dynamic: bool = True,
                 mapping: bool = True, use_masks: bool = True, strict_masks: bool = False,
                 max_frames: int | None = None, progress=None) -> RunResult:
    """Track every frame of ``source`` and fuse the static scene into a voxel map.

    ``filter_dynamic=False`` turns off both rejection stages and the class
    exclusion of the map, which is the ablation baseline.
    """
    cfg = config or source.config
    params = dataclasses.replace(cfg.tracker, filter_dynamic=filter_dynamic)
    table = cfg.class_table()
    rig = cfg.rig(*source.image_size)
    tracker = Tracker(rig, params, table)
    mp = cfg.map
    vmap = VoxelMap(mp.resolution, mp.l_hit, mp.l_miss, mp.l_min, mp.l_max) if mapping and source.has_depth else None
    n = len(source) if max_frames is None else min(len(source), max_frames)
    stamps, poses, diags = [], [], []
    t_start = time.perf_counter()
    for frame in source.frames(strict_masks=strict_masks):
        if frame.index >= n:
            break
        pose, diag = tracker.track_frame(frame.tracker_input(use_masks))
        if vmap is not None and frame.depth is not None:
            t0 = time.perf_counter()
            cloud = build_local_cloud(frame.left, frame.depth, frame.mask if use_masks else None, rig.intrinsics,
                                      table, mp.max_cloud_depth, mp.stride, exclude_dynamic=filter_dynamic)
            vmap.integrate(cloud, pose)
            dt = (time.perf_counter() - t0) * 1e3
            diag.timing_ms["map"] = dt
            diag.timing_ms["total"] = diag.timing_ms.get("total", 0.0) + dt
        stamps.append(frame.timestamp)
        poses.append(pose)
        diags.append(diag)
        if progress is not None:
            progress(frame.index, diag)
    elapsed = time.perf_counter() - t_start
    fps = len(poses) / elapsed if elapsed > 0 else float("inf")
    return RunResult(Trajectory(np.array(stamps), poses), diags, vmap, fps)


def write_diagnostics(path, diags) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["frame", "timestamp", *Diagnostics.COUNT_FIELDS, "fundamental_ok",
                     *[f"{k}_ms" for k in TIMING_KEYS]])
        for d in diags:
            wr.writerow([d.index, f"{d.timestamp:.9f}", *[getattr(d, k) for k in Diagnostics.COUNT_FIELDS],
                         int(d.fundamental_ok), *[f"{d.timing_ms.get(k, 0.0):.3f}" for k in TIMING_KEYS]])


def read_diagnostics(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _atomic_output(out: Path, fill) -> None:
    """Build outputs in a sibling temp dir, then swap it into place."""
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    try:
        fill(tmp)
        if out.exists():
            old = Path(tempfile.mkdtemp(prefix=f".{out.name}.old.", dir=out.parent))
            os.replace(out, old / "prev")
            os.replace(tmp, out)
            shutil.rmtree(old, ignore_errors=True)
        else:
            os.replace(tmp, out)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------

def _load_source(args):
    if args.sequence and args.kitti:
        raise SettingsError("use either --sequence or --kitti, not both")
    if args.settings is not None and not Path(args.settings).is_file():
        raise SettingsError(f"settings file not found: {args.settings}")
    if args.sequence:
        root = Path(args.sequence)
        settings = Path(args.settings) if args.settings else root / "settings.txt"
        if not settings.is_file():
            raise SettingsError(f"settings file not found: {settings}")
        return load_generic(root, settings), str(settings)
    if args.kitti:
        if args.seq is None:
            raise SettingsError("--kitti needs --seq")
        return load_kitti(args.kitti, args.seq, args.settings), args.settings
    raise SettingsError("one of --sequence or --kitti is required")


def cmd_run(args) -> int:
    source, settings_path = _load_source(args)
    cfg = source.config
    tr = cfg.tracker
    if args.seed is not None:
        tr = dataclasses.replace(tr, seed=args.seed)
    if args.max_depth is not None:
        tr = dataclasses.replace(tr, max_depth=args.max_depth)
    cfg = cfg.replace(tracker=tr)
    mapping = not args.no_map and source.has_depth
    if not args.no_map and not source.has_depth:
        log.warning("no depth rasters: producing the trajectory only")

    def progress(i, d):
        if args.verbose:
            print(f"frame {i}: detected {d.detected} rejected {d.rejected} inliers {d.inliers} "
                  f"{d.timing_ms.get('total', 0):.0f} ms", file=sys.stderr)

    try:
        result = run_pipeline(source, cfg, filter_dynamic=not args.no_filter, mapping=mapping,
                              use_masks=not args.no_masks, strict_masks=args.strict_masks,
                              max_frames=args.max_frames, progress=progress)
    except TrackingLost as exc:
        print(f"error: tracking lost at frame {exc.frame_index}: {exc}", file=sys.stderr)
        return EXIT_LOST

    def fill(tmp: Path):
        write_kitti(tmp / "trajectory_kitti.txt", result.trajectory)
        write_tum(tmp / "trajectory_tum.txt", result.trajectory)
        n_vox = None
        if result.voxel_map is not None:
            n_vox = export_ply(result.voxel_map, tmp / "map.ply")
        write_diagnostics(tmp / "diagnostics.csv", result.diagnostics)
        manifest = {
            "input": {"sequence": args.sequence, "kitti": args.kitti, "seq": args.seq, "name": source.name,
                      "frames": len(source)},
            "settings": settings_path,
            "output": str(Path(args.out)),
            "flags": {"strict_masks": args.strict_masks, "filter": not args.no_filter, "map": mapping,
                      "masks": not args.no_masks, "seed": cfg.tracker.seed, "max_depth": args.max_depth,
                      "max_frames": args.max_frames},
            "frames_processed": len(result.trajectory),
            "occupied_voxels": n_vox,
            "fps": result.fps,
            "timing_ms": [{k: round(d.timing_ms.get(k, 0.0), 3) for k in TIMING_KEYS} for d in result.diagnostics],
        }
        (tmp / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")

    _atomic_output(Path(args.out), fill)
    print(f"{len(result.trajectory)} frames, {result.fps:.2f} FPS -> {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    ref, fmt_ref = read_trajectory(args.ref)
    est, fmt_est = read_trajectory(args.est)
    if fmt_ref == "kitti" or fmt_est == "kitti":
        pairs = index_pairs(ref, est)
    else:
        pairs = associate(ref, est, args.max_dt)
    report = ape(ref, est, args.align, pairs=pairs)
    print(f"ref {args.ref} ({fmt_ref}), est {args.est} ({fmt_est}), pairs {len(pairs)}, alignment {args.align}")
    print(f"rmse {report.rmse:.6f}")
    print(f"mean {report.mean:.6f}")
    print(f"max  {report.max:.6f}")
    print(f"min  {report.min:.6f}")
    if args.out:
        write_report(report, args.out)
    return EXIT_OK


def cmd_synth(args) -> int:
    script = load_script(args.script or demo_script_path())
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.noise is not None:
        changes["noise"] = args.noise
    if args.frames is not None:
        changes["frame_count"] = args.frames
    if changes:
        script = script.with_changes(**changes)
    if args.no_dynamic:
        script = script.without_dynamic()
    summary = render_sequence(script, args.out)
    print(f"wrote {summary['frames']} frames ({summary['size'][0]}x{summary['size'][1]}) to {args.out}; "
          f"{summary['dynamic_objects']} moving object(s), max coverage {summary['max_mover_coverage']:.1%}, "
          f"camera path {summary['path_length']:.3f} m")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dynavo", description="Stereo odometry and mapping with dynamic-object rejection.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="track a sequence and build the map")
    r.add_argument("--sequence", help="generic-layout sequence directory")
    r.add_argument("--kitti", help="KITTI odometry root")
    r.add_argument("--seq", help="KITTI sequence id")
    r.add_argument("--settings", help="settings file (default: <sequence>/settings.txt)")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--no-filter", action="store_true", help="disable mask and epipolar rejection")
    r.add_argument("--no-map", action="store_true", help="skip map integration")
    r.add_argument("--no-masks", action="store_true", help="ignore label masks (epipolar filter only)")
    r.add_argument("--strict-masks", action="store_true", help="missing mask files are errors")
    r.add_argument("--seed", type=int)
    r.add_argument("--max-depth", type=float, help="stereo depth cut-off in meters")
    r.add_argument("--max-frames", type=int)
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("eval", help="absolute pose error of an estimate against a reference")
    e.add_argument("ref")
    e.add_argument("est")
    e.add_argument("--align", choices=ALIGNMENTS, default="rigid")
    e.add_argument("--max-dt", type=float, default=0.02)
    e.add_argument("--out", help="directory for CSV, summary and SVG")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("synth", help="render a synthetic stereo sequence")
    s.add_argument("script", nargs="?", help="scene script (default: bundled demo)")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--noise", type=float)
    s.add_argument("--frames", type=int)
    s.add_argument("--no-dynamic", action="store_true", help="drop moving objects")
    s.set_defaults(func=cmd_synth)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (SettingsError, ScriptError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrackingLost as exc:
        print(f"error: tracking lost at frame {exc.frame_index}: {exc}", file=sys.stderr)
        return EXIT_LOST
    except (DatasetError, AssociationError, ImageSizeError, DegenerateGeometry, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
