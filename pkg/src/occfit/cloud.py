"""Point-cloud ingestion, normalization, and training-pool construction.

Coordinates flow through two spaces: ``raw`` (file units) and
``normalized`` (centroid at the origin, farthest point at norm 0.5).
The :class:`Normalization` record converts between them and is carried
into checkpoints so meshes can be emitted back in raw units.

Training consumes two pools built here once, up front:

* pairs — perturbed queries q ~ N(p0, sigma_{p0}^2 I) matched with their
  exact nearest cloud point p (which may differ from the generator p0);
* a uniform pool over the padded bounding box of the cloud.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigError, DegenerateInputError, ParseError

Array = np.ndarray


@dataclass(frozen=True)
class Normalization:
    """Maps raw coordinates to the normalized frame: (x - centroid) * scale."""

    centroid: Array
    scale: float

    def to_normalized(self, raw: Array) -> Array:
        return (np.asarray(raw, dtype=np.float64) - self.centroid) * self.scale

    def to_raw(self, normalized: Array) -> Array:
        return np.asarray(normalized, dtype=np.float64) / self.scale + self.centroid

    @staticmethod
    def identity() -> "Normalization":
        return Normalization(centroid=np.zeros(3), scale=1.0)


@dataclass
class PointCloud:
    points: Array
    normalization: Optional[Normalization] = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[1] != 3:
            raise ConfigError(f"point array must be (n, 3), got {self.points.shape}")
        if not np.all(np.isfinite(self.points)):
            raise DegenerateInputError("point cloud contains non-finite coordinates")

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass
class TrainingPairSet:
    """Queries with their exact nearest cloud points, plus the uniform pool."""

    queries: Array
    anchors: Array
    uniform_pool: Array
    box: Array  # (2, 3): lower and upper corners

    def __post_init__(self):
        assert self.queries.shape == self.anchors.shape
        assert self.box.shape == (2, 3)


def _parse_xyz(lines) -> Array:
    pts = []
    for lineno, line in enumerate(lines, start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        tok = body.split()
        if len(tok) < 3:
            raise ParseError(f"expected 3 coordinates, got {len(tok)}", line=lineno)
        try:
            pts.append([float(tok[0]), float(tok[1]), float(tok[2])])
        except ValueError:
            raise ParseError(f"non-numeric coordinate in {tok[:3]}", line=lineno) from None
    return np.asarray(pts, dtype=np.float64).reshape(-1, 3)


def _parse_ply_ascii(lines) -> Array:
    # Header: collect per-element (name, count) and the vertex property order.
    it = enumerate(lines, start=1)
    lineno, first = next(it, (0, ""))
    if first.strip() != "ply":
        raise ParseError("missing 'ply' magic", line=1)
    elements: list[tuple[str, int]] = []
    vertex_props: list[str] = []
    fmt_seen = False
    for lineno, line in it:
        tok = line.strip().split()
        if not tok or tok[0] == "comment":
            continue
        if tok[0] == "format":
            if tok[1] != "ascii":
                raise ParseError(f"unsupported ply format {tok[1]!r}", line=lineno)
            fmt_seen = True
        elif tok[0] == "element":
            elements.append((tok[1], int(tok[2])))
        elif tok[0] == "property":
            if elements and elements[-1][0] == "vertex" and tok[1] != "list":
                vertex_props.append(tok[-1])
        elif tok[0] == "end_header":
            break
    else:
        raise ParseError("unterminated ply header", line=lineno)
    if not fmt_seen:
        raise ParseError("ply header missing format line", line=lineno)
    try:
        cols = [vertex_props.index(c) for c in ("x", "y", "z")]
    except ValueError:
        raise ParseError("vertex element lacks x/y/z properties", line=lineno) from None

    pts = []
    for name, count in elements:
        rows = []
        for _ in range(count):
            row_lineno, line = next(it, (None, None))
            if line is None:
                raise ParseError(f"file ends inside element {name!r} "
                                 f"(expected {count} rows)", line=lineno)
            rows.append((row_lineno, line))
        if name != "vertex":
            continue
        for row_lineno, line in rows:
            tok = line.split()
            if len(tok) < len(vertex_props):
                raise ParseError(f"vertex row has {len(tok)} values, "
                                 f"expected {len(vertex_props)}", line=row_lineno)
            try:
                pts.append([float(tok[c]) for c in cols])
            except ValueError:
                raise ParseError("non-numeric vertex coordinate", line=row_lineno) from None
    return np.asarray(pts, dtype=np.float64).reshape(-1, 3)


FORMATS = ("xyz", "ply")


def load_cloud(path, format: Optional[str] = None) -> PointCloud:
    """Read a raw (un-normalized) cloud from .xyz or ASCII .ply.

    Normals/colors/extra properties are dropped; only positions load.
    """
    path = str(path)
    if format is None:
        ext = path.rsplit(".", 1)[-1].lower()
        format = "ply" if ext == "ply" else "xyz"
    if format not in FORMATS:
        raise ConfigError(f"format must be one of {FORMATS}, got {format!r}")
    try:
        with open(path) as f:
            lines = f.readlines()
    except OSError as e:
        raise ParseError(f"cannot read point cloud: {e}", path=path) from e
    try:
        pts = _parse_xyz(lines) if format == "xyz" else _parse_ply_ascii(lines)
    except ParseError as e:
        raise ParseError(e.message, path=path, line=e.line) from None
    return PointCloud(points=pts)


def save_xyz(points: Array, path) -> None:
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    with open(path, "w") as f:
        for p in points:
            f.write(f"{float(p[0])!r} {float(p[1])!r} {float(p[2])!r}\n")


def normalize(cloud: PointCloud) -> PointCloud:
    """Center at the centroid and scale so the farthest point has norm 0.5."""
    pts = cloud.points
    if len(pts) < 2:
        raise DegenerateInputError("normalization needs at least 2 points")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    max_dist = float(np.linalg.norm(centered, axis=1).max())
    if max_dist <= 0.0:
        raise DegenerateInputError("all points identical; cannot normalize")
    norm = Normalization(centroid=centroid, scale=0.5 / max_dist)
    return PointCloud(points=centered * norm.scale, normalization=norm)


def knn(cloud: PointCloud, query: Array, k: int) -> Array:
    """Indices of the exact k nearest points, distance-sorted, ties by
    lower index. A query coinciding with a cloud point includes it."""
    n = len(cloud)
    if not (1 <= k <= n):
        raise ConfigError(f"k={k} out of range for cloud of {n} points")
    diff = cloud.points - np.asarray(query, dtype=np.float64)
    d2 = np.einsum("ij,ij->i", diff, diff)
    order = np.argsort(d2, kind="stable")
    return order[:k]


def compute_sigmas(cloud: PointCloud, k: int) -> Array:
    """Per-point perturbation scale: distance to the k-th nearest point,
    the point itself counting as its own first neighbor."""
    n = len(cloud)
    if k < 2:
        raise ConfigError("k must be >= 2: k=1 is the point itself (sigma would be 0)")
    if k > n:
        raise ConfigError(f"k={k} exceeds cloud size {n}")
    tree = cKDTree(cloud.points)
    dists, _ = tree.query(cloud.points, k=k)
    sigmas = dists[:, -1].astype(np.float64)
    if np.any(sigmas <= 0.0):
        raise DegenerateInputError(
            "duplicate points collapse the k-th neighbor distance to 0; "
            "deduplicate the cloud or raise k")
    return sigmas


def build_pairs(cloud: PointCloud, sigmas: Array, pool_size: int,
                rng: np.random.Generator) -> tuple[Array, Array]:
    """Draw the query pool: pick a generator point uniformly, perturb it
    with its isotropic Gaussian scale, then anchor the query to its exact
    nearest cloud point (not necessarily the generator)."""
    if pool_size < 1:
        raise ConfigError("pool_size must be >= 1")
    sigmas = np.asarray(sigmas, dtype=np.float64)
    if sigmas.shape != (len(cloud),):
        raise ConfigError("sigma table length must match cloud size")
    gen = rng.integers(0, len(cloud), size=pool_size)
    queries = cloud.points[gen] + rng.standard_normal((pool_size, 3)) * sigmas[gen, None]
    tree = cKDTree(cloud.points)
    _, nn = tree.query(queries)
    return queries, cloud.points[nn]


def bounding_box(points: Array, padding_fraction: float = 0.1) -> Array:
    """Axis-aligned bounds expanded by padding_fraction of the extent per side."""
    points = np.asarray(points, dtype=np.float64)
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    pad = (hi - lo) * padding_fraction
    return np.stack([lo - pad, hi + pad])


def build_uniform_pool(cloud: PointCloud, pool_size: int,
                       padding_fraction: float, rng: np.random.Generator
                       ) -> tuple[Array, Array]:
    """Uniform i.i.d. samples in the padded bounding box of the cloud."""
    if pool_size < 1:
        raise ConfigError("pool_size must be >= 1")
    box = bounding_box(cloud.points, padding_fraction)
    samples = rng.uniform(box[0], box[1], size=(pool_size, 3))
    return samples, box


def build_training_set(cloud: PointCloud, k: int, pool_pairs: int,
                       pool_omega: int, padding_fraction: float,
                       rng: np.random.Generator) -> TrainingPairSet:
    """Sigma table + both pools in one deterministic pass."""
    sigmas = compute_sigmas(cloud, k)
    queries, anchors = build_pairs(cloud, sigmas, pool_pairs, rng)
    uniform_pool, box = build_uniform_pool(cloud, pool_omega, padding_fraction, rng)
    return TrainingPairSet(queries=queries, anchors=anchors,
                           uniform_pool=uniform_pool, box=box)
