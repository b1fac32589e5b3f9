import math

import numpy as np
import pytest

from pano360 import geometry as geo
from pano360 import resample as rs
from pano360.errors import DataError


def smooth_erp_image(h, seed=0):
    """Low-frequency test image defined directly on the sphere (no seams)."""
    dirs = geo.erp_direction_grid(h)
    x, y, z = dirs[..., 0], dirs[..., 1], dirs[..., 2]
    return (
        0.5
        + 0.2 * np.sin(3 * x + 1) * np.cos(2 * y)
        + 0.15 * np.sin(4 * z)
        + 0.1 * x * y
    )


def psnr(a, b, peak=1.0):
    mse = np.mean((a - b) ** 2)
    return math.inf if mse == 0 else 10 * math.log10(peak**2 / mse)


def spherical_field(fn, dirs):
    return fn(dirs[..., 0], dirs[..., 1], dirs[..., 2])


class TestSampleBilinear:
    def test_exact_at_pixel_centers(self):
        rng = np.random.default_rng(0)
        img = rng.uniform(size=(6, 12))
        rows, cols = np.meshgrid(np.arange(6), np.arange(12), indexing="ij")
        theta, phi = geo.erp_pixel_to_spherical(rows, cols, 6, 12)
        out = rs.sample_bilinear(img, theta, phi)
        np.testing.assert_allclose(out, img, atol=1e-12)

    def test_exact_on_longitude_ramp(self):
        # bilinear reproduces a per-column linear ramp away from the seam
        img = np.tile(np.arange(16.0), (8, 1))
        theta = np.linspace(-2.5, 2.5, 40)
        out = rs.sample_bilinear(img, theta, np.zeros_like(theta))
        colf = (theta + math.pi) * 16 / (2 * math.pi) - 0.5
        np.testing.assert_allclose(out, colf, atol=1e-12)

    def test_wraps_across_longitude_seam(self):
        img = np.zeros((2, 4))
        img[:, 0] = 1.0
        img[:, 3] = 3.0
        out = rs.sample_bilinear(img, -math.pi, 0.0)
        assert out == pytest.approx(2.0)

    def test_multichannel(self):
        img = np.stack([np.full((4, 8), 1.0), np.full((4, 8), 2.0)], axis=-1)
        out = rs.sample_bilinear(img, np.array([0.3]), np.array([0.1]))
        np.testing.assert_allclose(out, [[1.0, 2.0]], atol=1e-12)


class TestGatherOperator:
    def test_mask_transport_is_boolean_and_conservative(self):
        g = rs.rotation_gather(32, rs.random_rotation(5))
        assert g.apply_mask(np.ones((32, 64), bool)).all()
        assert not g.apply_mask(np.zeros((32, 64), bool)).any()
        out = g.apply_mask(np.random.default_rng(2).uniform(size=(32, 64)) > 0.5)
        assert out.dtype == bool

    def test_vjp_is_exact_adjoint(self):
        # <Ax, y> == <x, A^T y> for the linear gather
        rng = np.random.default_rng(3)
        g = rs.cube_gather(16, 8)
        x = rng.normal(size=(16, 32))
        y = rng.normal(size=g.out_shape)
        lhs = float(np.sum(g.apply(x) * y))
        rhs = float(np.sum(x * g.vjp(y)))
        assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_grid_upsample_preserves_constant(self):
        g = rs.grid_upsample_gather(4, 8, 32, 64)
        np.testing.assert_allclose(g.apply(np.full((4, 8), 2.5)), 2.5, atol=1e-12)


class TestRotate:
    def test_identity_is_noop(self):
        img = smooth_erp_image(64)
        out, mask = rs.rotate_erp(img, np.eye(3))
        np.testing.assert_allclose(out, img, atol=1e-12)
        assert mask.all()

    def test_yaw90_is_column_roll(self):
        # output at q reads input at R^T q, so yaw +90 rolls columns right by w/4
        rng = np.random.default_rng(4)
        img = rng.uniform(size=(32, 64))
        out, _ = rs.rotate_erp(img, geo.face_rotation(geo.CubeFace.RIGHT))
        np.testing.assert_allclose(out, np.roll(img, 16, axis=1), atol=1e-12)

    def test_round_trip_psnr(self):
        img = smooth_erp_image(256, seed=5)
        R = rs.random_rotation(7)
        mid, _ = rs.rotate_erp(img, R)
        back, _ = rs.rotate_erp(mid, R.T)
        assert psnr(back, img) >= 28.0

    def test_spherical_field_equivariance(self):
        # rotating a field sampled from the sphere == sampling the rotated field
        h = 128
        R = rs.random_rotation(8)
        fn = lambda x, y, z: np.sin(3 * x) + 0.5 * np.cos(2 * y) * z
        dirs = geo.erp_direction_grid(h)
        rotated, _ = rs.rotate_erp(spherical_field(fn, dirs), R)
        expected = spherical_field(fn, dirs @ R)
        assert psnr(rotated, expected, peak=2.0) >= 40.0

    def test_mask_rotates_with_image(self):
        mask = np.zeros((32, 64), bool)
        mask[:, :32] = True
        _, out = rs.rotate_erp(np.ones((32, 64)), geo.face_rotation(geo.CubeFace.RIGHT), mask)
        np.testing.assert_array_equal(out, np.roll(mask, 16, axis=1))


class TestCubemap:
    def test_face_centers_sample_axis_directions(self):
        dirs = geo.erp_direction_grid(128)
        img = spherical_field(lambda x, y, z: x + 2 * y + 4 * z, dirs)
        faces, _ = rs.erp_to_cube(img, 64)
        for face in geo.CubeFace:
            ax = geo.FACE_AXES[int(face)]
            center = faces[int(face), 31:33, 31:33].mean()
            assert center == pytest.approx(ax @ [1, 2, 4], abs=0.01)

    def test_round_trip_psnr(self):
        img = smooth_erp_image(512, seed=6)
        faces, _ = rs.erp_to_cube(img, 256)
        back = rs.cube_to_erp(faces, 512)
        assert psnr(back, img) >= 30.0

    def test_solid_angle_partition(self):
        # hard face assignment splits the sphere into six equal-area cells
        h = 256
        dirs = geo.erp_direction_grid(h)
        weights = np.cos(geo.unit_vec_to_spherical(dirs)[1])
        fids = np.asarray(geo.face_of_direction(dirs.reshape(-1, 3))).reshape(h, 2 * h)
        total = weights.sum()
        for face in geo.CubeFace:
            frac = weights[fids == int(face)].sum() / total
            assert frac == pytest.approx(1 / 6, rel=0.01)

    def test_constant_image_survives_exactly(self):
        faces, _ = rs.erp_to_cube(np.full((64, 128), 3.5), 32)
        np.testing.assert_allclose(faces, 3.5, atol=1e-12)
        np.testing.assert_allclose(rs.cube_to_erp(faces, 64), 3.5, atol=1e-12)

    def test_masks_propagate(self):
        mask = np.zeros((64, 128), bool)
        _, fmasks = rs.erp_to_cube(np.ones((64, 128)), 32, mask=mask)
        assert fmasks.shape == (6, 32, 32) and not fmasks.any()

    def test_cube_to_erp_rejects_bad_stack(self):
        with pytest.raises(DataError):
            rs.cube_to_erp(np.zeros((5, 8, 8)), 16)


class TestTangent:
    def test_fov90_six_view_matches_cubemap(self):
        img = smooth_erp_image(128, seed=9)
        rotations = np.stack([geo.face_rotation(f) for f in geo.CubeFace])
        patches, _, _ = rs.erp_to_tangent(
            img, n_patches=6, fov=math.pi / 2, patch_px=64, rotations=rotations
        )
        faces, _ = rs.erp_to_cube(img, 64)
        assert np.abs(patches - faces).max() <= 1e-6

    @pytest.mark.parametrize("n_views", [6, 12, 20])
    def test_standard_layouts(self, n_views):
        img = smooth_erp_image(64)
        patches, rotations, masks = rs.erp_to_tangent(
            img, n_patches=n_views, fov=math.pi / 2, patch_px=16
        )
        assert patches.shape == (n_views, 16, 16)
        assert rotations.shape == (n_views, 3, 3)
        assert masks.all()
        assert np.isfinite(patches).all()

    def test_icosahedral_centers(self):
        centers = rs.icosahedral_centers()
        assert centers.shape == (20, 3)
        np.testing.assert_allclose(np.linalg.norm(centers, axis=1), 1.0, atol=1e-12)
        d = np.linalg.norm(centers[:, None] - centers[None], axis=-1)
        assert (d + np.eye(20)).min() > 0.1  # all pairwise-distinct

    def test_look_rotation_points_z_at_target(self):
        for seed in range(5):
            d = geo.normalize(np.random.default_rng(seed).normal(size=3))
            R = rs.look_rotation(d)
            geo.validate_rotation(R)
            np.testing.assert_allclose(R[:, 2], d, atol=1e-12)

    def test_rejects_bad_fov(self):
        with pytest.raises(DataError):
            rs.erp_to_tangent(np.zeros((8, 16)), n_patches=6, fov=math.pi, patch_px=8)


class TestRandomRotation:
    def test_deterministic(self):
        np.testing.assert_array_equal(rs.random_rotation(42), rs.random_rotation(42))
        assert not np.allclose(rs.random_rotation(42), rs.random_rotation(43))

    def test_valid_rotations(self):
        for seed in range(20):
            geo.validate_rotation(rs.random_rotation(seed))

    def test_yaw_only_fixes_y_axis(self):
        for seed in range(10):
            R = rs.random_rotation(seed, mode="yaw_only")
            np.testing.assert_allclose(
                geo.rotate_direction(R, np.array([0.0, 1.0, 0.0])), [0, 1, 0], atol=1e-12
            )

    def test_identity_mode(self):
        np.testing.assert_array_equal(rs.random_rotation(9, mode="identity"), np.eye(3))

    def test_full_so3_is_roughly_uniform(self):
        # mean of rotated forward vectors over many seeds should be near zero
        vecs = np.array(
            [
                geo.rotate_direction(rs.random_rotation(s), np.array([0.0, 0.0, 1.0]))
                for s in range(400)
            ]
        )
        assert np.linalg.norm(vecs.mean(axis=0)) < 0.15
