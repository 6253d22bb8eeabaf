"""Lattice sampling, marching cubes, mesh predicates, and mesh I/O."""

import numpy as np
import pytest

from occfit.cloud import Normalization
from occfit.errors import ConfigError, ParseError
from occfit.field import make_affine_probe
from occfit.mesher import (EmptySurfaceWarning, GridSpec, TriangleMesh,
                           extract, face_areas, face_normals,
                           is_closed_2manifold, load_mesh, marching_cubes,
                           sample_grid, signed_volume, write_mesh)

BOX = np.array([[-0.5, -0.5, -0.5], [0.5, 0.5, 0.5]])


def sphere_signal(radius):
    """Positive inside a sphere of the given radius, zero on it."""
    return lambda pts: radius - np.linalg.norm(pts, axis=1)


def tetrahedron():
    verts = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0],
                      [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    tris = np.array([[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]])
    return TriangleMesh(vertices=verts, triangles=tris)


def half_cube():
    s = 0.5
    verts = s * np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
                          [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]],
                         dtype=np.float64)
    tris = np.array([[0, 2, 1], [0, 3, 2], [4, 5, 6], [4, 6, 7],
                     [0, 1, 5], [0, 5, 4], [1, 2, 6], [1, 6, 5],
                     [2, 3, 7], [2, 7, 6], [3, 0, 4], [3, 4, 7]])
    return TriangleMesh(vertices=verts, triangles=tris)


class TestGridSpec:
    def test_validation(self):
        with pytest.raises(ConfigError):
            GridSpec(bounds=np.zeros((3, 2)))
        with pytest.raises(ConfigError):
            GridSpec(bounds=BOX, resolution=7)
        with pytest.raises(ConfigError):
            GridSpec(bounds=np.array([[0.0, 0, 0], [1.0, 0.0, 1.0]]))

    def test_axes_hand_case(self):
        g = GridSpec(bounds=np.array([[0.0, 0, 0], [1.0, 2.0, 4.0]]),
                     resolution=8)
        ax = g.axes()
        assert all(a.shape == (9,) for a in ax)
        assert ax[0][0] == 0.0 and ax[0][-1] == 1.0
        assert ax[1][4] == 1.0 and ax[1][-1] == 2.0
        assert ax[2][2] == 1.0 and ax[2][-1] == 4.0
        np.testing.assert_array_equal(ax[0], np.arange(9) / 8.0)

    def test_spacing(self):
        g = GridSpec(bounds=np.array([[-1.0, 0, 0], [1.0, 2.0, 8.0]]),
                     resolution=16)
        np.testing.assert_array_equal(g.spacing(),
                                      np.array([0.125, 0.125, 0.5]))

    def test_doubling_resolution_keeps_coarse_lattice(self):
        bounds = np.array([[-0.37, -0.11, 0.023], [0.55, 0.7, 1.9]])
        coarse = GridSpec(bounds=bounds, resolution=12)
        fine = GridSpec(bounds=bounds, resolution=24)
        for a_c, a_f in zip(coarse.axes(), fine.axes()):
            np.testing.assert_array_equal(a_c, a_f[::2])

    def test_lattice_points_order(self):
        g = GridSpec(bounds=BOX, resolution=8)
        pts = g.lattice_points()
        assert pts.shape == (9 ** 3, 3)
        np.testing.assert_array_equal(pts[0], BOX[0])
        # z varies fastest, then y, then x
        np.testing.assert_array_equal(pts[1], [-0.5, -0.5, -0.375])
        np.testing.assert_array_equal(pts[9], [-0.5, -0.375, -0.5])
        np.testing.assert_array_equal(pts[81], [-0.375, -0.5, -0.5])
        np.testing.assert_array_equal(pts[-1], BOX[1])


class TestTriangleMesh:
    def test_coerces_input_shapes(self):
        m = TriangleMesh(vertices=[[0, 0, 0], [1, 0, 0], [0, 1, 0]],
                         triangles=[[0, 1, 2]])
        assert m.vertices.dtype == np.float64
        assert m.triangles.dtype == np.int64
        assert not m.is_empty

    def test_is_empty(self):
        m = TriangleMesh(vertices=np.zeros((0, 3)),
                         triangles=np.zeros((0, 3), dtype=np.int64))
        assert m.is_empty

    def test_validate_accepts_good_mesh(self):
        tetrahedron().validate()

    def test_validate_rejects_nonfinite(self):
        m = tetrahedron()
        m.vertices[0, 0] = np.nan
        with pytest.raises(ConfigError, match="non-finite"):
            m.validate()

    def test_validate_rejects_bad_indices(self):
        m = tetrahedron()
        m.triangles[0, 0] = 4
        with pytest.raises(ConfigError, match="out of range"):
            m.validate()
        m.triangles[0, 0] = -1
        with pytest.raises(ConfigError, match="out of range"):
            m.validate()

    def test_validate_rejects_zero_area(self):
        m = TriangleMesh(vertices=[[0, 0, 0], [1, 0, 0], [2, 0, 0]],
                         triangles=[[0, 1, 2]])
        with pytest.raises(ConfigError, match="area"):
            m.validate()


class TestMeshGeometry:
    def test_right_triangle_area_and_normal(self):
        m = TriangleMesh(vertices=[[0, 0, 0], [1, 0, 0], [0, 1, 0]],
                         triangles=[[0, 1, 2]])
        assert face_areas(m)[0] == 0.5
        np.testing.assert_array_equal(face_normals(m)[0], [0.0, 0.0, 1.0])

    def test_scaled_triangle_area(self):
        m = TriangleMesh(vertices=[[0, 0, 0], [2, 0, 0], [0, 3, 0]],
                         triangles=[[0, 1, 2]])
        assert face_areas(m)[0] == 3.0

    def test_winding_flip_reverses_normal(self):
        m = TriangleMesh(vertices=[[0, 0, 0], [1, 0, 0], [0, 1, 0]],
                         triangles=[[0, 2, 1]])
        np.testing.assert_array_equal(face_normals(m)[0], [0.0, 0.0, -1.0])

    def test_tetrahedron_volume(self):
        assert signed_volume(tetrahedron()) == 1.0 / 6.0

    def test_inverted_tetrahedron_volume_is_negative(self):
        m = tetrahedron()
        m.triangles = m.triangles[:, [0, 2, 1]]
        assert signed_volume(m) == -1.0 / 6.0

    def test_half_cube_area_and_volume(self):
        m = half_cube()
        assert face_areas(m).sum() == 1.5
        assert signed_volume(m) == 0.125
        assert is_closed_2manifold(m)

    def test_translation_invariant_volume(self):
        m = tetrahedron()
        shifted = TriangleMesh(vertices=m.vertices + [10.0, -4.0, 7.0],
                               triangles=m.triangles)
        assert abs(signed_volume(shifted) - 1.0 / 6.0) < 1e-10


class TestClosedManifold:
    def test_tetrahedron_is_closed(self):
        assert is_closed_2manifold(tetrahedron())

    def test_empty_is_not(self):
        m = TriangleMesh(vertices=np.zeros((0, 3)),
                         triangles=np.zeros((0, 3), dtype=np.int64))
        assert not is_closed_2manifold(m)

    def test_missing_face_breaks_closure(self):
        m = tetrahedron()
        m.triangles = m.triangles[:-1]
        assert not is_closed_2manifold(m)

    def test_flipped_face_breaks_consistency(self):
        m = tetrahedron()
        m.triangles[0] = m.triangles[0][[0, 2, 1]]
        assert not is_closed_2manifold(m)

    def test_duplicated_face_breaks_manifoldness(self):
        m = tetrahedron()
        m.triangles = np.vstack([m.triangles, m.triangles[:1]])
        assert not is_closed_2manifold(m)

    def test_single_triangle_is_open(self):
        m = TriangleMesh(vertices=[[0, 0, 0], [1, 0, 0], [0, 1, 0]],
                         triangles=[[0, 1, 2]])
        assert not is_closed_2manifold(m)


class TestSampleGrid:
    def test_callable_field_values_land_on_lattice(self):
        g = GridSpec(bounds=BOX, resolution=8)
        lattice = sample_grid(lambda pts: pts[:, 0], g)
        assert lattice.shape == (9, 9, 9)
        ax = g.axes()[0]
        for i in range(9):
            np.testing.assert_array_equal(lattice[i], np.full((9, 9), ax[i]))

    def test_wrong_size_callable_rejected(self):
        g = GridSpec(bounds=BOX, resolution=8)
        with pytest.raises(ConfigError, match="wrong number"):
            sample_grid(lambda pts: np.zeros(3), g)

    def test_field_path_matches_callable_path(self):
        probe = make_affine_probe(np.array([1.0, 0.5, -0.25]), 0.1)
        g = GridSpec(bounds=BOX, resolution=8)
        from occfit.field import margin_batch
        via_field = sample_grid(probe, g, dtype="float64")
        via_callable = sample_grid(
            lambda pts: margin_batch(probe, pts, dtype=np.float64), g)
        np.testing.assert_array_equal(via_field, via_callable)

    def test_chunking_does_not_change_values(self):
        probe = make_affine_probe(np.array([0.3, -1.0, 0.7]), 0.0)
        g = GridSpec(bounds=BOX, resolution=12)
        a = sample_grid(probe, g, dtype="float64", chunk=100)
        b = sample_grid(probe, g, dtype="float64", chunk=10 ** 6)
        np.testing.assert_array_equal(a, b)


class TestMarchingCubes:
    def test_sphere_surface_fidelity(self):
        g = GridSpec(bounds=BOX, resolution=48)
        r = 0.25
        mesh = extract(sphere_signal(r), g)
        assert not mesh.is_empty
        assert is_closed_2manifold(mesh)
        radii = np.linalg.norm(mesh.vertices, axis=1)
        h = float(g.spacing()[0])
        assert np.max(np.abs(radii - r)) < h
        want_vol = 4.0 / 3.0 * np.pi * r ** 3
        assert abs(signed_volume(mesh) - want_vol) / want_vol < 0.05

    def test_normals_point_outward(self):
        # positive margin inside means normals must face away from it
        g = GridSpec(bounds=BOX, resolution=32)
        mesh = extract(sphere_signal(0.3), g)
        centers = mesh.vertices[mesh.triangles].mean(axis=1)
        dots = np.einsum("ij,ij->i", face_normals(mesh),
                         centers / np.linalg.norm(centers, axis=1,
                                                  keepdims=True))
        assert np.all(dots > 0)

    def test_slab_lands_on_expected_axis(self):
        # distinguishes the [i, j, k] = (x, y, z) convention from any
        # transposed indexing: the surface of 0.3 - |x| is two x-planes
        g = GridSpec(bounds=BOX, resolution=16)
        mesh = extract(lambda pts: 0.3 - np.abs(pts[:, 0]), g)
        assert not mesh.is_empty
        np.testing.assert_allclose(np.abs(mesh.vertices[:, 0]), 0.3,
                                   atol=1e-5)
        assert np.ptp(mesh.vertices[:, 1]) > 0.9
        assert np.ptp(mesh.vertices[:, 2]) > 0.9

    def test_iso_level_offset(self):
        g = GridSpec(bounds=BOX, resolution=32)
        mesh = extract(sphere_signal(0.3), g, iso=0.05)
        radii = np.linalg.norm(mesh.vertices, axis=1)
        assert np.max(np.abs(radii - 0.25)) < float(g.spacing()[0])

    def test_translation_shifts_vertices(self):
        t = np.array([0.25, 0.25, 0.25])
        g1 = GridSpec(bounds=BOX, resolution=16)
        g2 = GridSpec(bounds=BOX + t, resolution=16)
        m1 = extract(sphere_signal(0.25), g1)
        m2 = extract(lambda pts: sphere_signal(0.25)(pts - t), g2)
        np.testing.assert_allclose(m2.vertices, m1.vertices + t, atol=1e-12)
        np.testing.assert_array_equal(m2.triangles, m1.triangles)

    def test_one_sided_lattice_warns_and_returns_empty(self):
        g = GridSpec(bounds=BOX, resolution=8)
        with pytest.warns(EmptySurfaceWarning):
            mesh = extract(lambda pts: np.ones(len(pts)), g)
        assert mesh.is_empty
        with pytest.warns(EmptySurfaceWarning):
            mesh = extract(lambda pts: -np.ones(len(pts)), g)
        assert mesh.is_empty

    def test_shape_mismatch_rejected(self):
        g = GridSpec(bounds=BOX, resolution=8)
        with pytest.raises(ConfigError, match="lattice shape"):
            marching_cubes(np.zeros((8, 8, 8)), g)

    def test_nonfinite_lattice_rejected(self):
        g = GridSpec(bounds=BOX, resolution=8)
        lattice = np.ones((9, 9, 9))
        lattice[0, 0, 0] = np.nan
        with pytest.raises(ConfigError, match="non-finite"):
            marching_cubes(lattice, g)

    def test_float32_field_sampling_close_to_float64(self):
        probe = make_affine_probe(np.array([0.8, -0.6, 0.0]), 0.05)
        g = GridSpec(bounds=BOX, resolution=16)
        m32 = extract(probe, g, dtype="float32")
        m64 = extract(probe, g, dtype="float64")
        # the triangulations may differ where lattice values sit within
        # float32 rounding of zero, but both meshes lie on the same plane
        for m in (m32, m64):
            d = (m.vertices @ np.array([0.8, -0.6, 0.0])) + 0.05
            assert np.max(np.abs(d)) < 1e-4


class TestMeshIO:
    def test_obj_round_trip(self, tmp_path):
        m = tetrahedron()
        m.coordinate_space = "raw"
        path = tmp_path / "tet.obj"
        write_mesh(m, None, path)
        back = load_mesh(path)
        assert back.coordinate_space == "raw"
        np.testing.assert_allclose(back.vertices, m.vertices, atol=1e-8)
        np.testing.assert_array_equal(back.triangles, m.triangles)
        assert is_closed_2manifold(back)

    def test_ply_round_trip(self, tmp_path):
        m = half_cube()
        m.coordinate_space = "raw"
        path = tmp_path / "cube.ply"
        write_mesh(m, None, path)
        back = load_mesh(path)
        np.testing.assert_allclose(back.vertices, m.vertices, atol=1e-8)
        np.testing.assert_array_equal(back.triangles, m.triangles)
        assert abs(signed_volume(back) - 0.125) < 1e-7

    def test_write_denormalizes(self, tmp_path):
        m = tetrahedron()  # coordinate_space defaults to "normalized"
        norm = Normalization(centroid=np.array([1.0, 2.0, 3.0]), scale=0.25)
        path = tmp_path / "raw.obj"
        write_mesh(m, norm, path)
        back = load_mesh(path)
        np.testing.assert_allclose(back.vertices, norm.to_raw(m.vertices),
                                   atol=1e-7)

    def test_raw_mesh_not_denormalized(self, tmp_path):
        m = tetrahedron()
        m.coordinate_space = "raw"
        norm = Normalization(centroid=np.array([1.0, 2.0, 3.0]), scale=0.25)
        path = tmp_path / "raw.obj"
        write_mesh(m, norm, path)
        back = load_mesh(path)
        np.testing.assert_allclose(back.vertices, m.vertices, atol=1e-8)

    def test_format_inference_and_override(self, tmp_path):
        m = tetrahedron()
        m.coordinate_space = "raw"
        write_mesh(m, None, tmp_path / "a.ply")
        assert (tmp_path / "a.ply").read_text().startswith("ply\n")
        write_mesh(m, None, tmp_path / "b.obj")
        assert (tmp_path / "b.obj").read_text().startswith("#")
        write_mesh(m, None, tmp_path / "c.dat", format="ply")
        assert (tmp_path / "c.dat").read_text().startswith("ply\n")
        with pytest.raises(ConfigError, match="format"):
            write_mesh(m, None, tmp_path / "d.obj", format="stl")

    def test_obj_fan_triangulation(self, tmp_path):
        path = tmp_path / "quad.obj"
        path.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\n"
                        "f 1/1/1 2/2/2 3/3/3 4/4/4\n")
        m = load_mesh(path)
        np.testing.assert_array_equal(m.triangles, [[0, 1, 2], [0, 2, 3]])

    def test_obj_comments_and_blank_lines(self, tmp_path):
        path = tmp_path / "c.obj"
        path.write_text("# header\n\nv 0 0 0 # inline\nv 1 0 0\nv 0 1 0\n"
                        "f 1 2 3\n")
        m = load_mesh(path)
        assert len(m.vertices) == 3
        assert len(m.triangles) == 1

    @pytest.mark.parametrize("content,lineno", [
        ("v 0 0\n", 1),
        ("v a b c\n", 1),
        ("v 0 0 0\nf 1 two 3\n", 2),
        ("v 0 0 0\nv 1 0 0\nf 1 2\n", 3),
    ])
    def test_obj_errors_carry_line_numbers(self, tmp_path, content, lineno):
        path = tmp_path / "bad.obj"
        path.write_text(content)
        with pytest.raises(ParseError) as exc:
            load_mesh(path)
        assert exc.value.line == lineno
        assert "bad.obj" in str(exc.value)

    def test_ply_reordered_properties(self, tmp_path):
        path = tmp_path / "zyx.ply"
        path.write_text("ply\nformat ascii 1.0\nelement vertex 3\n"
                        "property double z\nproperty double y\n"
                        "property double x\nelement face 1\n"
                        "property list uchar int vertex_indices\n"
                        "end_header\n"
                        "3 2 1\n6 5 4\n9 8 7\n3 0 1 2\n")
        m = load_mesh(path)
        np.testing.assert_array_equal(m.vertices,
                                      [[1, 2, 3], [4, 5, 6], [7, 8, 9]])

    def test_ply_quad_face_fan(self, tmp_path):
        path = tmp_path / "quad.ply"
        path.write_text("ply\nformat ascii 1.0\nelement vertex 4\n"
                        "property double x\nproperty double y\n"
                        "property double z\nelement face 1\n"
                        "property list uchar int vertex_indices\n"
                        "end_header\n"
                        "0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n")
        m = load_mesh(path)
        np.testing.assert_array_equal(m.triangles, [[0, 1, 2], [0, 2, 3]])

    @pytest.mark.parametrize("content,needle", [
        ("nope\n", "magic"),
        ("ply\nformat binary_little_endian 1.0\nend_header\n",
         "unsupported"),
        ("ply\nformat ascii 1.0\nelement vertex 1\n"
         "property double a\nproperty double b\nproperty double c\n"
         "end_header\n0 0 0\n", "x/y/z"),
        ("ply\nformat ascii 1.0\nelement vertex 2\n"
         "property double x\nproperty double y\nproperty double z\n"
         "end_header\n0 0 0\n", "ends inside"),
        ("ply\nformat ascii 1.0\nelement vertex 1\n"
         "property double x\nproperty double y\nproperty double z\n"
         "end_header\n0 zero 0\n", "bad vertex"),
        ("ply\nformat ascii 1.0\nelement vertex 1\n"
         "property double x\nproperty double y\nproperty double z\n"
         "element face 1\nproperty list uchar int vertex_indices\n"
         "end_header\n0 0 0\n3 0 one 2\n", "bad face"),
    ])
    def test_ply_errors(self, tmp_path, content, needle):
        path = tmp_path / "bad.ply"
        path.write_text(content)
        with pytest.raises(ParseError, match=needle):
            load_mesh(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParseError, match="cannot read mesh"):
            load_mesh(tmp_path / "nope.obj")

    def test_extract_write_load_round_trip(self, tmp_path):
        g = GridSpec(bounds=BOX, resolution=24)
        mesh = extract(sphere_signal(0.3), g)
        path = tmp_path / "sphere.ply"
        write_mesh(mesh, Normalization.identity(), path)
        back = load_mesh(path)
        assert is_closed_2manifold(back)
        np.testing.assert_allclose(back.vertices, mesh.vertices, atol=1e-7)
