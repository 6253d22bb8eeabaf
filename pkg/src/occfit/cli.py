"""Command-line pipeline.

    occfit synth       analytic shape -> noisy .xyz cloud + exact GT mesh
    occfit reconstruct .xyz/.ply cloud -> checkpoint (+ mesh, loss CSV)
    occfit mesh        checkpoint -> mesh at a chosen resolution
    occfit evaluate    predicted mesh vs ground truth -> metric report

Exit codes: 0 success; 2 usage, config, or unreadable/malformed input;
1 runtime failure (degenerate data, numeric breakdown, stalled training).
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import cloud as cloud_mod
from . import mesher, metrics, shapes, trainer
from .config import RunConfig, load_config, parse_items
from .errors import (CheckpointFormatError, ConfigError, OccfitError,
                     ParseError)
from .mesher import GridSpec

METRIC_NAMES = ("cd1", "cd2", "hd", "fs", "nc")


def _strip_ext(path: str) -> str:
    head, _, ext = str(path).rpartition(".")
    return head if head and "/" not in ext else str(path)


def _load_run_config(args) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        cfg = load_config(args.config, base=cfg)
    overrides = []
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        overrides.append((key.strip(), value.strip()))
    if overrides:
        cfg = parse_items(overrides, base=cfg)
    return cfg


def cmd_synth(args) -> int:
    rng = np.random.default_rng([args.seed])
    points, gt_mesh = shapes.generate(args.shape, args.n_points,
                                      args.noise_sigma, rng)
    cloud_mod.save_xyz(points, args.out)
    gt_path = args.gt_mesh or _strip_ext(args.out) + "_gt.obj"
    mesher.write_mesh(gt_mesh, None, gt_path)
    print(f"wrote {args.n_points} points to {args.out} "
          f"(noise sigma {args.noise_sigma:g})")
    print(f"wrote ground-truth mesh to {gt_path} "
          f"({len(gt_mesh.vertices)} vertices, {len(gt_mesh.triangles)} faces)")
    return 0


def cmd_reconstruct(args) -> int:
    cfg = _load_run_config(args)
    raw = cloud_mod.load_cloud(args.input)
    cloud = cloud_mod.normalize(raw)
    base = _strip_ext(args.input)
    checkpoint_path = args.checkpoint or base + ".ckpt"
    log_path = args.log or base + "_loss.csv"
    print(f"fitting {len(cloud)} points for {cfg.trainer.n_iterations} "
          f"iterations (seed {cfg.trainer.seed}, "
          f"{cfg.trainer.compute_dtype} compute)")
    result = trainer.fit(cloud, cfg.network, cfg.init, cfg.schedule,
                         cfg.trainer, log_path=log_path,
                         checkpoint_path=checkpoint_path,
                         resume_from=args.resume_from)
    if result.log:
        _, last = result.log[-1]
        print(f"final loss {last.total:.6f} "
              f"(boundary {last.l_samp:.6f}, entropy {last.l_entr:+.6f}, "
              f"lambda {last.lam:.4g})")
    print(f"trained in {result.wall_seconds:.1f}s; checkpoint: {checkpoint_path}")
    if args.mesh:
        resolution = args.resolution or cfg.grid_resolution
        grid = GridSpec(bounds=result.box, resolution=resolution)
        mesh = mesher.extract(result.field, grid)
        mesher.write_mesh(mesh, cloud.normalization, args.mesh)
        print(f"wrote mesh to {args.mesh} ({len(mesh.vertices)} vertices, "
              f"{len(mesh.triangles)} faces at resolution {resolution})")
    return 0


def cmd_mesh(args) -> int:
    ck = trainer.load_checkpoint(args.checkpoint)
    grid = GridSpec(bounds=ck.box, resolution=args.resolution)
    mesh = mesher.extract(ck.to_field(), grid)
    mesher.write_mesh(mesh, ck.normalization, args.out, format=args.format)
    print(f"wrote mesh to {args.out} ({len(mesh.vertices)} vertices, "
          f"{len(mesh.triangles)} faces at resolution {args.resolution})")
    return 0


def cmd_evaluate(args) -> int:
    names = None
    if args.metrics:
        names = [n.strip() for n in args.metrics.split(",") if n.strip()]
        unknown = [n for n in names if n not in METRIC_NAMES]
        if unknown:
            raise ConfigError(f"unknown metrics {unknown}; "
                              f"choose from {METRIC_NAMES}")
        if "nc" in names and not args.with_normals:
            raise ConfigError("normal consistency requested but sampling "
                              "normals is disabled (--no-with-normals)")
    with_normals = args.with_normals and (names is None or "nc" in names)
    pred = mesher.load_mesh(args.pred)
    gt = mesher.load_mesh(args.gt)
    report = metrics.evaluate_meshes(pred, gt, args.samples, args.tau,
                                     args.seed, with_normals=with_normals)
    if names is None:
        print(report.table())
    else:
        values = {"cd1": report.cd1 * 100.0, "cd2": report.cd2 * 100.0,
                  "hd": report.hd, "fs": report.fs, "nc": report.nc}
        for n in names:
            print(f"{n} {values[n]:.6f}")
    if args.csv:
        with open(args.csv, "w") as f:
            f.write(metrics.MetricReport.CSV_HEADER + "\n")
            f.write(report.csv_row() + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="occfit",
        description="Watertight surface reconstruction from a sparse, noisy, "
                    "unoriented point cloud via a neural occupancy field.")
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("synth", help="generate a synthetic noisy cloud + GT mesh")
    ps.add_argument("shape", choices=shapes.SHAPES)
    ps.add_argument("--n-points", type=int, default=1024)
    ps.add_argument("--noise-sigma", type=float, default=0.005)
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--out", required=True, help="output .xyz path")
    ps.add_argument("--gt-mesh", default=None,
                    help="ground-truth mesh path (default: <out>_gt.obj)")
    ps.set_defaults(fn=cmd_synth)

    pr = sub.add_parser("reconstruct", help="fit an occupancy field to a cloud")
    pr.add_argument("input", help=".xyz or ASCII .ply point cloud")
    pr.add_argument("--config", default=None, help="key=value config file")
    pr.add_argument("--set", action="append", metavar="KEY=VALUE",
                    help="override a single config key (repeatable)")
    pr.add_argument("--checkpoint", default=None,
                    help="output checkpoint (default: <input>.ckpt)")
    pr.add_argument("--mesh", default=None, help="also extract a mesh here")
    pr.add_argument("--log", default=None,
                    help="loss CSV (default: <input>_loss.csv)")
    pr.add_argument("--resolution", type=int, default=None,
                    help="mesh grid resolution (default: grid.resolution)")
    pr.add_argument("--resume-from", default=None,
                    help="training-state checkpoint to continue from")
    pr.set_defaults(fn=cmd_reconstruct)

    pm = sub.add_parser("mesh", help="extract a mesh from a checkpoint")
    pm.add_argument("checkpoint")
    pm.add_argument("--out", required=True)
    pm.add_argument("--resolution", type=int, default=128)
    pm.add_argument("--format", choices=mesher.MESH_FORMATS, default=None)
    pm.set_defaults(fn=cmd_mesh)

    pe = sub.add_parser("evaluate", help="score a mesh against ground truth")
    pe.add_argument("pred")
    pe.add_argument("gt")
    pe.add_argument("--samples", type=int, default=100_000)
    pe.add_argument("--tau", type=float, default=0.01)
    pe.add_argument("--seed", type=int, default=0)
    pe.add_argument("--with-normals", action=argparse.BooleanOptionalAction,
                    default=True)
    pe.add_argument("--metrics", default=None,
                    help="comma-separated subset of cd1,cd2,hd,fs,nc")
    pe.add_argument("--csv", default=None, help="also write a CSV report here")
    pe.set_defaults(fn=cmd_evaluate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code else 0
    try:
        return args.fn(args)
    except (ConfigError, ParseError, CheckpointFormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OccfitError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
