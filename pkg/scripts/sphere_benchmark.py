#!/usr/bin/env python3
"""End-to-end benchmark on the synthetic sphere.

Generates a noisy cloud, fits the occupancy field, extracts a mesh, and
scores it against the exact sphere mesh. With --full this matches the
default training configuration; the default arguments run a reduced
setup that finishes in a few minutes on one core.

    python scripts/sphere_benchmark.py --out-dir /tmp/sphere_bench
    python scripts/sphere_benchmark.py --full --iterations 10000
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from occfit import cloud as cloud_mod
from occfit import mesher, metrics, shapes, trainer
from occfit.config import RunConfig, parse_items
from occfit.mesher import GridSpec

REDUCED = [
    ("network.num_hidden_layers", "4"),
    ("network.hidden_width", "64"),
    ("network.skip_layer_index", "2"),
    ("trainer.batch_pairs", "1024"),
    ("trainer.batch_omega", "256"),
    ("trainer.batch_cloud", "256"),
    ("trainer.pool_pairs", "50000"),
    ("trainer.pool_omega", "2000"),
    ("trainer.k_neighbors", "25"),
    ("grid.resolution", "64"),
]


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", type=Path, default=Path("bench_sphere"))
    ap.add_argument("--n-points", type=int, default=1024)
    ap.add_argument("--noise-sigma", type=float, default=0.005)
    ap.add_argument("--iterations", type=int, default=3000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--samples", type=int, default=100_000,
                    help="surface samples per mesh for the metrics")
    ap.add_argument("--full", action="store_true",
                    help="use the full-size network and batch settings")
    args = ap.parse_args()

    cfg = RunConfig() if args.full else parse_items(REDUCED)
    cfg = parse_items([("trainer.n_iterations", str(args.iterations)),
                       ("trainer.seed", str(args.seed))], base=cfg)

    args.out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng([args.seed])
    points, gt_mesh = shapes.generate("sphere", args.n_points,
                                      args.noise_sigma, rng)
    cloud_mod.save_xyz(points, args.out_dir / "cloud.xyz")

    cloud = cloud_mod.normalize(cloud_mod.PointCloud(points))
    t0 = time.perf_counter()
    result = trainer.fit(cloud, cfg.network, cfg.init, cfg.schedule,
                         cfg.trainer,
                         log_path=args.out_dir / "loss.csv",
                         checkpoint_path=args.out_dir / "field.ckpt")
    fit_s = time.perf_counter() - t0

    grid = GridSpec(bounds=result.box, resolution=cfg.grid_resolution)
    mesh = mesher.extract(result.field, grid)
    mesher.write_mesh(mesh, cloud.normalization,
                      args.out_dir / "reconstruction.obj")
    closed = mesher.is_closed_2manifold(mesh)

    pred = mesher.load_mesh(args.out_dir / "reconstruction.obj")
    report = metrics.evaluate_meshes(pred, gt_mesh, args.samples,
                                     tau=cfg.metrics.tau, seed=args.seed)
    print(f"fit: {fit_s:.1f}s for {args.iterations} iterations "
          f"({1000.0 * fit_s / max(args.iterations, 1):.1f} ms/it)")
    print(f"mesh: {len(mesh.vertices)} vertices, "
          f"{len(mesh.triangles)} faces, closed={closed}")
    print(report.table())
    with open(args.out_dir / "report.csv", "w") as f:
        f.write(metrics.MetricReport.CSV_HEADER + "\n")
        f.write(report.csv_row() + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
