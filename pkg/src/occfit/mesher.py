"""Isosurface extraction: sample the margin on a lattice, run marching
cubes at level zero, and read/write triangle meshes.

Lattice convention: a resolution-R grid has (R+1)^3 corners at
coordinates lo + (i * (hi - lo)) / R per axis, indexed [i, j, k] for
(x, y, z).  With that arithmetic a resolution-R lattice is bit-exactly
the even-index sublattice of the resolution-2R one.

Winding convention: triangles are oriented so face normals point toward
negative margin (outside).  For a closed surface around positive margin
this makes the signed volume positive.
"""

from __future__ import annotations

import warnings
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from skimage import measure

from . import field as field_mod
from .cloud import Normalization
from .errors import ConfigError, ParseError
from .field import OccupancyField

Array = np.ndarray


class EmptySurfaceWarning(UserWarning):
    """The lattice never crosses the iso level; the mesh is empty."""


@dataclass(frozen=True)
class GridSpec:
    bounds: Array  # (2, 3): lower and upper corners
    resolution: int = 128

    def __post_init__(self):
        object.__setattr__(self, "bounds",
                           np.asarray(self.bounds, dtype=np.float64))
        if self.bounds.shape != (2, 3):
            raise ConfigError("bounds must be a (2, 3) lo/hi box")
        if self.resolution < 8:
            raise ConfigError("resolution must be >= 8")
        if not np.all(self.bounds[1] > self.bounds[0]):
            raise ConfigError("bounds box is degenerate (hi must exceed lo)")

    def axes(self) -> list[Array]:
        lo, hi = self.bounds
        idx = np.arange(self.resolution + 1, dtype=np.float64)
        return [lo[a] + (idx * (hi[a] - lo[a])) / self.resolution
                for a in range(3)]

    def lattice_points(self) -> Array:
        """All (R+1)^3 corner coordinates, index order [i, j, k] -> row-major."""
        ax = self.axes()
        g = np.meshgrid(*ax, indexing="ij")
        return np.stack([c.reshape(-1) for c in g], axis=1)

    def spacing(self) -> Array:
        return (self.bounds[1] - self.bounds[0]) / self.resolution


@dataclass
class TriangleMesh:
    vertices: Array
    triangles: Array
    coordinate_space: str = "normalized"

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)

    @property
    def is_empty(self) -> bool:
        return self.triangles.shape[0] == 0

    def validate(self, min_area: float = 1e-12) -> None:
        if not np.all(np.isfinite(self.vertices)):
            raise ConfigError("mesh has non-finite vertices")
        if self.triangles.size and (self.triangles.min() < 0
                                    or self.triangles.max() >= len(self.vertices)):
            raise ConfigError("triangle index out of range")
        if self.triangles.size:
            bad = int((face_areas(self) <= min_area).sum())
            if bad:
                raise ConfigError(f"{bad} triangles have area <= {min_area}")


def face_areas(mesh: TriangleMesh) -> Array:
    a, b, c = (mesh.vertices[mesh.triangles[:, i]] for i in range(3))
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def face_normals(mesh: TriangleMesh) -> Array:
    """Unit normals under the triangle winding (right-hand rule)."""
    a, b, c = (mesh.vertices[mesh.triangles[:, i]] for i in range(3))
    n = np.cross(b - a, c - a)
    norms = np.linalg.norm(n, axis=1, keepdims=True)
    return n / np.maximum(norms, 1e-300)


def signed_volume(mesh: TriangleMesh) -> float:
    a, b, c = (mesh.vertices[mesh.triangles[:, i]] for i in range(3))
    return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)


def is_closed_2manifold(mesh: TriangleMesh) -> bool:
    """Every undirected edge bounds exactly two triangles, and the two
    windings traverse it in opposite directions."""
    if mesh.is_empty:
        return False
    directed = Counter()
    for t in mesh.triangles:
        for e in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            directed[e] += 1
    if any(c != 1 for c in directed.values()):
        return False
    return all((b, a) in directed for (a, b) in directed)


FieldLike = Union[OccupancyField, Callable[[Array], Array]]


def sample_grid(field: FieldLike, grid: GridSpec, dtype="float32",
                chunk: int = 262144) -> Array:
    """Margin values at every lattice corner, shape (R+1, R+1, R+1).

    ``field`` is either a fitted occupancy field or any callable mapping
    an (n, 3) array to n scalar values (analytic test fields).
    """
    pts = grid.lattice_points()
    if isinstance(field, OccupancyField):
        values = field_mod.margin_batch(field, pts, dtype=dtype, chunk=chunk)
    else:
        values = np.asarray(field(pts), dtype=np.float64).reshape(-1)
        if values.shape[0] != pts.shape[0]:
            raise ConfigError("scalar field returned wrong number of values")
    side = grid.resolution + 1
    return values.reshape(side, side, side)


def marching_cubes(lattice: Array, grid: GridSpec,
                   iso: float = 0.0) -> TriangleMesh:
    """Triangulate the iso level of a sampled lattice (normalized space).

    A lattice that never reaches the level on both sides yields an empty
    mesh and an EmptySurfaceWarning instead of an error.
    """
    lattice = np.asarray(lattice, dtype=np.float64)
    side = grid.resolution + 1
    if lattice.shape != (side, side, side):
        raise ConfigError(f"lattice shape {lattice.shape} does not match "
                          f"resolution {grid.resolution}")
    if not np.all(np.isfinite(lattice)):
        raise ConfigError("lattice contains non-finite values")
    if lattice.min() > iso or lattice.max() < iso:
        warnings.warn("lattice is entirely on one side of the iso level; "
                      "returning an empty mesh", EmptySurfaceWarning)
        return TriangleMesh(vertices=np.zeros((0, 3)),
                            triangles=np.zeros((0, 3), dtype=np.int64))
    verts, faces, _, _ = measure.marching_cubes(
        lattice, level=iso, spacing=tuple(grid.spacing()),
        gradient_direction="ascent", allow_degenerate=False)
    return TriangleMesh(vertices=verts.astype(np.float64) + grid.bounds[0],
                        triangles=faces.astype(np.int64))


def extract(field: FieldLike, grid: GridSpec, iso: float = 0.0,
            dtype="float32") -> TriangleMesh:
    return marching_cubes(sample_grid(field, grid, dtype=dtype), grid, iso=iso)


MESH_FORMATS = ("obj", "ply")


def _mesh_format(path, format: Optional[str]) -> str:
    if format is None:
        ext = str(path).rsplit(".", 1)[-1].lower()
        format = "ply" if ext == "ply" else "obj"
    if format not in MESH_FORMATS:
        raise ConfigError(f"mesh format must be one of {MESH_FORMATS}, "
                          f"got {format!r}")
    return format


def write_mesh(mesh: TriangleMesh, normalization: Optional[Normalization],
               path, format: Optional[str] = None) -> None:
    """Write OBJ or ASCII PLY; vertices are de-normalized to raw
    coordinates when the mesh is in normalized space and a record is given."""
    format = _mesh_format(path, format)
    verts = mesh.vertices
    if mesh.coordinate_space == "normalized" and normalization is not None:
        verts = normalization.to_raw(verts)
    tris = mesh.triangles
    with open(path, "w") as f:
        if format == "obj":
            f.write(f"# {len(verts)} vertices, {len(tris)} triangles\n")
            for v in verts:
                f.write(f"v {v[0]:.8f} {v[1]:.8f} {v[2]:.8f}\n")
            for t in tris:
                f.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")
        else:
            f.write("ply\nformat ascii 1.0\n"
                    f"element vertex {len(verts)}\n"
                    "property double x\nproperty double y\nproperty double z\n"
                    f"element face {len(tris)}\n"
                    "property list uchar int vertex_indices\nend_header\n")
            for v in verts:
                f.write(f"{v[0]:.8f} {v[1]:.8f} {v[2]:.8f}\n")
            for t in tris:
                f.write(f"3 {t[0]} {t[1]} {t[2]}\n")


def _read_obj(lines) -> tuple[Array, Array]:
    verts, tris = [], []
    for lineno, line in enumerate(lines, start=1):
        tok = line.split("#", 1)[0].split()
        if not tok:
            continue
        if tok[0] == "v":
            if len(tok) < 4:
                raise ParseError("vertex line needs 3 coordinates", line=lineno)
            try:
                verts.append([float(tok[1]), float(tok[2]), float(tok[3])])
            except ValueError:
                raise ParseError("non-numeric vertex coordinate",
                                 line=lineno) from None
        elif tok[0] == "f":
            try:
                idx = [int(t.split("/", 1)[0]) - 1 for t in tok[1:]]
            except ValueError:
                raise ParseError("non-integer face index", line=lineno) from None
            if len(idx) < 3:
                raise ParseError("face needs at least 3 vertices", line=lineno)
            for a, b in zip(idx[1:-1], idx[2:]):  # fan-triangulate polygons
                tris.append([idx[0], a, b])
    return (np.asarray(verts, dtype=np.float64).reshape(-1, 3),
            np.asarray(tris, dtype=np.int64).reshape(-1, 3))


def _read_ply_mesh(lines) -> tuple[Array, Array]:
    it = enumerate(lines, start=1)
    _, first = next(it, (0, ""))
    if first.strip() != "ply":
        raise ParseError("missing 'ply' magic", line=1)
    elements: list[tuple[str, int]] = []
    vertex_props: list[str] = []
    for lineno, line in it:
        tok = line.strip().split()
        if not tok or tok[0] == "comment":
            continue
        if tok[0] == "format":
            if tok[1] != "ascii":
                raise ParseError(f"unsupported ply format {tok[1]!r}", line=lineno)
        elif tok[0] == "element":
            elements.append((tok[1], int(tok[2])))
        elif tok[0] == "property":
            if elements and elements[-1][0] == "vertex" and tok[1] != "list":
                vertex_props.append(tok[-1])
        elif tok[0] == "end_header":
            break
    try:
        cols = [vertex_props.index(c) for c in ("x", "y", "z")]
    except ValueError:
        raise ParseError("vertex element lacks x/y/z properties",
                         line=lineno) from None
    verts, tris = [], []
    for name, count in elements:
        for _ in range(count):
            row_lineno, line = next(it, (None, None))
            if line is None:
                raise ParseError(f"file ends inside element {name!r}")
            tok = line.split()
            if name == "vertex":
                try:
                    verts.append([float(tok[c]) for c in cols])
                except (ValueError, IndexError):
                    raise ParseError("bad vertex row", line=row_lineno) from None
            elif name == "face":
                try:
                    k = int(tok[0])
                    idx = [int(t) for t in tok[1:1 + k]]
                except (ValueError, IndexError):
                    raise ParseError("bad face row", line=row_lineno) from None
                for a, b in zip(idx[1:-1], idx[2:]):
                    tris.append([idx[0], a, b])
    return (np.asarray(verts, dtype=np.float64).reshape(-1, 3),
            np.asarray(tris, dtype=np.int64).reshape(-1, 3))


def load_mesh(path, format: Optional[str] = None) -> TriangleMesh:
    """Read an OBJ or ASCII PLY mesh; coordinates are taken as raw."""
    format = _mesh_format(path, format)
    try:
        with open(path) as f:
            lines = f.readlines()
    except OSError as e:
        raise ParseError(f"cannot read mesh: {e}", path=str(path)) from e
    try:
        verts, tris = (_read_obj(lines) if format == "obj"
                       else _read_ply_mesh(lines))
    except ParseError as e:
        raise ParseError(e.message, path=str(path), line=e.line) from None
    return TriangleMesh(vertices=verts, triangles=tris, coordinate_space="raw")
