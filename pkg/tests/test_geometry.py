import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pano360 import geometry as geo
from pano360.errors import DataError

FACES = list(geo.CubeFace)


def unit_vecs(n, seed=0):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


class TestErpPixelConversions:
    def test_top_row_center_pixel(self):
        theta, phi = geo.erp_pixel_to_spherical(0, 1, 2, 4)
        assert theta == pytest.approx(-math.pi / 4)
        assert phi == pytest.approx(math.pi / 4)

    def test_top_left_pixel(self):
        theta, phi = geo.erp_pixel_to_spherical(0, 0, 2, 4)
        assert theta == pytest.approx(-3 * math.pi / 4)
        assert phi == pytest.approx(math.pi / 4)

    def test_rejects_non_2to1(self):
        with pytest.raises(DataError):
            geo.erp_pixel_to_spherical(0, 0, 4, 4)

    def test_exhaustive_round_trip_8x16(self):
        rows, cols = np.meshgrid(np.arange(8), np.arange(16), indexing="ij")
        theta, phi = geo.erp_pixel_to_spherical(rows, cols, 8, 16)
        r2, c2 = geo.spherical_to_erp_pixel(theta, phi, 8, 16)
        np.testing.assert_allclose(r2, rows, atol=1e-12)
        np.testing.assert_allclose(c2, cols, atol=1e-12)


class TestSphericalVector:
    @pytest.mark.parametrize(
        "theta,phi,expect",
        [
            (0.0, 0.0, (0, 0, 1)),
            (math.pi / 2, 0.0, (1, 0, 0)),
            (0.0, math.pi / 2, (0, 1, 0)),
        ],
    )
    def test_axis_directions(self, theta, phi, expect):
        np.testing.assert_allclose(
            geo.spherical_to_unit_vec(theta, phi), expect, atol=1e-15
        )

    def test_inverse_axis_cases(self):
        assert geo.unit_vec_to_spherical(np.array([0.0, 0.0, 1.0])) == (0.0, 0.0)
        t, p = geo.unit_vec_to_spherical(np.array([0.0, 1.0, 0.0]))
        assert t == 0.0 and p == pytest.approx(math.pi / 2)

    def test_pole_longitude_convention(self):
        t, _ = geo.unit_vec_to_spherical(np.array([0.0, -1.0, 0.0]))
        assert t == 0.0

    def test_rejects_non_unit(self):
        with pytest.raises(DataError):
            geo.unit_vec_to_spherical(np.array([0.0, 0.0, 2.0]))

    def test_random_round_trip_1e5(self):
        q = unit_vecs(100_000, seed=1)
        theta, phi = geo.unit_vec_to_spherical(q)
        q2 = geo.spherical_to_unit_vec(theta, phi)
        assert np.abs(q2 - q).max() < 1e-12

    def test_erp_grid_round_trip(self):
        dirs = geo.erp_direction_grid(16)
        theta, phi = geo.unit_vec_to_spherical(dirs)
        back = geo.spherical_to_unit_vec(theta, phi)
        assert np.abs(back - dirs).max() < 1e-12


class TestRotation:
    def test_identity_rotation(self):
        q = unit_vecs(10, seed=2)
        np.testing.assert_allclose(geo.rotate_direction(np.eye(3), q), q, atol=1e-15)

    def test_yaw90_moves_forward_to_right(self):
        R = geo.face_rotation(geo.CubeFace.RIGHT)  # yaw +90 about y
        np.testing.assert_allclose(
            geo.rotate_direction(R, np.array([0.0, 0.0, 1.0])), [1, 0, 0], atol=1e-15
        )

    def test_inverse_round_trip(self):
        rng = np.random.default_rng(3)
        from scipy.spatial.transform import Rotation

        R = Rotation.random(random_state=rng).as_matrix()
        q = unit_vecs(100, seed=4)
        back = geo.rotate_direction(R.T, geo.rotate_direction(R, q))
        assert np.abs(back - q).max() < 1e-12

    def test_rotation_preserves_dot_products(self):
        from scipy.spatial.transform import Rotation

        R = Rotation.random(random_state=np.random.default_rng(5)).as_matrix()
        a, b = unit_vecs(50, seed=6), unit_vecs(50, seed=7)
        before = np.sum(a * b, axis=1)
        after = np.sum(geo.rotate_direction(R, a) * geo.rotate_direction(R, b), axis=1)
        assert np.abs(before - after).max() < 1e-12

    def test_validate_rejects_reflection(self):
        M = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(DataError):
            geo.validate_rotation(M)


class TestFaceConventions:
    def test_front_is_identity(self):
        np.testing.assert_array_equal(geo.face_rotation(geo.CubeFace.FRONT), np.eye(3))

    @pytest.mark.parametrize("face", FACES)
    def test_face_rotations_orthonormal(self, face):
        R = geo.face_rotation(face)
        np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-12)
        assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("face", FACES)
    def test_face_axis_maps_to_center(self, face):
        # each face's outward axis projects to the face center
        axis = geo.FACE_AXES[int(face)]
        u, v, front = geo.project_to_face(axis, face, 256)
        assert front
        assert (u, v) == (pytest.approx(128.0), pytest.approx(128.0))


class TestProjectToFace:
    def test_front_center(self):
        u, v, front = geo.project_to_face(np.array([0.0, 0.0, 1.0]), geo.CubeFace.FRONT, 256)
        assert front and u == pytest.approx(128) and v == pytest.approx(128)

    def test_behind_camera_is_out_of_face(self):
        _, _, front = geo.project_to_face(np.array([0.0, 0.0, -1.0]), geo.CubeFace.FRONT, 256)
        assert not front

    def test_45_degrees_lands_on_edge(self):
        q = np.array([1.0, 0.0, 1.0]) / math.sqrt(2)
        u, v, front = geo.project_to_face(q, geo.CubeFace.FRONT, 256)
        assert front and u == pytest.approx(256.0) and v == pytest.approx(128.0)

    def test_face_pixel_to_direction_center(self):
        q = geo.face_pixel_to_direction(128.0, 128.0, geo.CubeFace.FRONT, 256)
        np.testing.assert_allclose(q, [0, 0, 1], atol=1e-15)

    def test_face_pixel_corner(self):
        q = geo.face_pixel_to_direction(0.0, 0.0, geo.CubeFace.FRONT, 2)
        np.testing.assert_allclose(q, np.array([-1.0, -1.0, 1.0]) / math.sqrt(3))

    @pytest.mark.parametrize("face", FACES)
    def test_round_trip_random_in_face_pixels(self, face):
        rng = np.random.default_rng(int(face) + 10)
        w = 64
        u = rng.uniform(0, w, 10_000)
        v = rng.uniform(0, w, 10_000)
        q = geo.face_pixel_to_direction(u, v, face, w)
        u2, v2, front = geo.project_to_face(q, face, w)
        assert front.all()
        assert np.abs(u2 - u).max() < 1e-10
        assert np.abs(v2 - v).max() < 1e-10


class TestFaceOfDirection:
    def test_axes(self):
        assert geo.face_of_direction(np.array([0.0, 0.0, 1.0])) == geo.CubeFace.FRONT
        assert geo.face_of_direction(np.array([1.0, 0.0, 0.0])) == geo.CubeFace.RIGHT
        assert geo.face_of_direction(np.array([0.0, -1.0, 0.0])) == geo.CubeFace.DOWN

    def test_tie_breaks_to_front(self):
        q = np.array([1.0, 0.0, 1.0]) / math.sqrt(2)
        assert geo.face_of_direction(q) == geo.CubeFace.FRONT

    def test_assigned_face_always_contains_direction(self):
        q = unit_vecs(20_000, seed=11)
        fids = geo.face_of_direction(q)
        for face in FACES:
            sel = fids == int(face)
            u, v, front = geo.project_to_face(q[sel], face, 128)
            assert front.all()
            assert geo.in_face(u, v, 128).all()


# phi stays away from the poles: longitude is ill-conditioned there (error
# scales as 1/cos(phi)); pole behavior is pinned by the vector-space tests.
@settings(max_examples=200, deadline=None)
@given(
    st.floats(-math.pi, math.pi - 1e-9),
    st.floats(-1.4, 1.4),
)
def test_spherical_vector_round_trip_property(theta, phi):
    q = geo.spherical_to_unit_vec(theta, phi)
    t2, p2 = geo.unit_vec_to_spherical(q)
    assert abs(geo.wrap_longitude(t2 - theta)) < 1e-9
    assert abs(p2 - phi) < 1e-9
