"""Analytic benchmark shapes: uniform surface samplers plus exact
triangle meshes, so the whole pipeline can be exercised and scored
without any external dataset.

All shapes are centered at the origin in raw coordinates and sized to
fit inside the [-0.5, 0.5]^3 cube.  Meshes are wound outward (positive
signed volume).
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .mesher import TriangleMesh

Array = np.ndarray

SHAPES = ("sphere", "torus", "box")

SPHERE_RADIUS = 0.25
TORUS_MAJOR = 0.3
TORUS_MINOR = 0.1
BOX_HALF_EXTENT = 0.25


def sphere_points(n: int, rng: np.random.Generator,
                  radius: float = SPHERE_RADIUS) -> Array:
    """Uniform on the sphere via normalized Gaussian directions."""
    dirs = rng.standard_normal((n, 3))
    norms = np.linalg.norm(dirs, axis=1, keepdims=True)
    # a numerically zero Gaussian triple is practically impossible; guard anyway
    bad = norms[:, 0] < 1e-12
    while bad.any():
        dirs[bad] = rng.standard_normal((int(bad.sum()), 3))
        norms = np.linalg.norm(dirs, axis=1, keepdims=True)
        bad = norms[:, 0] < 1e-12
    return radius * dirs / norms


def sphere_mesh(radius: float = SPHERE_RADIUS,
                subdivisions: int = 4) -> TriangleMesh:
    """Icosphere: subdivided icosahedron projected to the radius."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=np.float64)
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = list(verts / np.linalg.norm(verts[0]))
    for _ in range(subdivisions):
        midpoint: dict[tuple[int, int], int] = {}

        def mid(i, j):
            key = (i, j) if i < j else (j, i)
            if key not in midpoint:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                midpoint[key] = len(verts) - 1
            return midpoint[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    vertices = radius * np.asarray(verts)
    return TriangleMesh(vertices=vertices,
                        triangles=np.asarray(faces, dtype=np.int64),
                        coordinate_space="raw")


def torus_points(n: int, rng: np.random.Generator,
                 major: float = TORUS_MAJOR, minor: float = TORUS_MINOR
                 ) -> Array:
    """Uniform on the torus surface; the tube angle is drawn by rejection
    against the area element (major + minor*cos psi)."""
    out = np.empty((n, 3))
    filled = 0
    while filled < n:
        miss = n - filled
        phi = rng.uniform(0.0, 2.0 * np.pi, size=miss)
        psi = rng.uniform(0.0, 2.0 * np.pi, size=miss)
        accept = rng.uniform(0.0, 1.0, size=miss) <= (
            (major + minor * np.cos(psi)) / (major + minor))
        phi, psi = phi[accept], psi[accept]
        ring = major + minor * np.cos(psi)
        chunk = np.stack([ring * np.cos(phi), ring * np.sin(phi),
                          minor * np.sin(psi)], axis=1)
        out[filled:filled + len(chunk)] = chunk
        filled += len(chunk)
    return out


def torus_mesh(major: float = TORUS_MAJOR, minor: float = TORUS_MINOR,
               n_major: int = 96, n_minor: int = 48) -> TriangleMesh:
    phi = 2.0 * np.pi * np.arange(n_major) / n_major
    psi = 2.0 * np.pi * np.arange(n_minor) / n_minor
    ring = major + minor * np.cos(psi)[None, :]
    x = ring * np.cos(phi)[:, None]
    y = ring * np.sin(phi)[:, None]
    z = np.broadcast_to(minor * np.sin(psi)[None, :], x.shape)
    verts = np.stack([x.reshape(-1), y.reshape(-1), z.reshape(-1)], axis=1)

    def vid(i, j):
        return (i % n_major) * n_minor + (j % n_minor)

    faces = []
    for i in range(n_major):
        for j in range(n_minor):
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i + 1, j + 1), vid(i, j + 1)
            faces += [(a, b, c), (a, c, d)]
    return TriangleMesh(vertices=verts,
                        triangles=np.asarray(faces, dtype=np.int64),
                        coordinate_space="raw")


def box_points(n: int, rng: np.random.Generator,
               half_extent: float = BOX_HALF_EXTENT) -> Array:
    """Uniform on the cube surface: faces are equal-area, so pick one of
    six uniformly, then a uniform point on it."""
    h = half_extent
    face = rng.integers(0, 6, size=n)
    uv = rng.uniform(-h, h, size=(n, 2))
    pts = np.empty((n, 3))
    axis = face // 2
    sign = np.where(face % 2 == 0, -1.0, 1.0)
    for a in range(3):
        sel = axis == a
        others = [d for d in range(3) if d != a]
        pts[sel, a] = sign[sel] * h
        pts[np.ix_(sel, others)] = uv[sel]
    return pts


def box_mesh(half_extent: float = BOX_HALF_EXTENT) -> TriangleMesh:
    h = half_extent
    corners = np.array([[sx, sy, sz] for sx in (-h, h)
                        for sy in (-h, h) for sz in (-h, h)])
    # index bits: x*4 + y*2 + z; quads listed counter-clockwise from outside
    quads = [
        (0, 1, 3, 2),  # x = -h
        (4, 6, 7, 5),  # x = +h
        (0, 4, 5, 1),  # y = -h
        (2, 3, 7, 6),  # y = +h
        (0, 2, 6, 4),  # z = -h
        (1, 5, 7, 3),  # z = +h
    ]
    faces = []
    for a, b, c, d in quads:
        faces += [(a, b, c), (a, c, d)]
    return TriangleMesh(vertices=corners,
                        triangles=np.asarray(faces, dtype=np.int64),
                        coordinate_space="raw")


def generate(shape: str, n_points: int, noise_sigma: float,
             rng: np.random.Generator) -> tuple[Array, TriangleMesh]:
    """Noisy surface samples plus the exact ground-truth mesh."""
    if n_points < 1:
        raise ConfigError("n_points must be >= 1")
    if noise_sigma < 0:
        raise ConfigError("noise_sigma must be >= 0")
    if shape == "sphere":
        pts, mesh = sphere_points(n_points, rng), sphere_mesh()
    elif shape == "torus":
        pts, mesh = torus_points(n_points, rng), torus_mesh()
    elif shape == "box":
        pts, mesh = box_points(n_points, rng), box_mesh()
    else:
        raise ConfigError(f"shape must be one of {SHAPES}, got {shape!r}")
    if noise_sigma > 0:
        pts = pts + noise_sigma * rng.standard_normal((n_points, 3))
    return pts, mesh
