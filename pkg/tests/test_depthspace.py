import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pano360 import depthspace as ds
from pano360.errors import DataError, DegenerateMapError, InsufficientDataError


class TestDepthToDisparity:
    def test_hand_example(self):
        depth = np.array([[1.0, 2.0, 4.0, 8.0]])
        disp, mask = ds.depth_to_disparity(depth)
        # inverse depths 1, .5, .25, .125 min-max to [0, 1]
        np.testing.assert_allclose(disp, [[1.0, 3 / 7, 1 / 7, 0.0]], atol=1e-14)
        assert mask.all()

    def test_invalid_pixels_zeroed_and_masked(self):
        depth = np.array([[1.0, 2.0], [np.nan, 3.0]])
        mask = np.isfinite(depth)
        disp, out_mask = ds.depth_to_disparity(depth, mask)
        assert disp[1, 0] == 0.0
        assert not out_mask[1, 0] and out_mask[0, 0]

    def test_constant_depth_is_degenerate(self):
        with pytest.raises(DegenerateMapError):
            ds.depth_to_disparity(np.full((4, 4), 2.0))

    def test_nonpositive_valid_depth_rejected(self):
        with pytest.raises(DataError):
            ds.depth_to_disparity(np.array([[1.0, -2.0]]))

    def test_range_is_exactly_unit(self):
        rng = np.random.default_rng(0)
        depth = rng.uniform(0.5, 9.0, size=(32, 64))
        disp, _ = ds.depth_to_disparity(depth)
        assert disp.min() == 0.0 and disp.max() == 1.0


class TestAlignStats:
    def test_hand_example(self):
        s = ds.align_stats(np.array([1.0, 2.0, 4.0]))
        assert s.t == 2.0
        assert s.s == pytest.approx(1.0)  # mean(|1-2|, |2-2|, |4-2|) = 1

    def test_mask_restricts_stats(self):
        vals = np.array([1.0, 2.0, 4.0, 100.0])
        s = ds.align_stats(vals, np.array([True, True, True, False]))
        assert s.t == 2.0 and s.s == pytest.approx(1.0)

    def test_too_few_valid(self):
        with pytest.raises(InsufficientDataError):
            ds.align_stats(np.array([1.0]))

    def test_constant_map_degenerate(self):
        with pytest.raises(DegenerateMapError):
            ds.align_stats(np.full(10, 3.0))


class TestAffineInvariantLoss:
    def test_hand_example(self):
        # [1,2,4] vs [4,2,1]: both normalize to (+-1, 0) patterns, mean |diff| = 2
        loss = ds.affine_invariant_loss(np.array([1.0, 2.0, 4.0]), np.array([4.0, 2.0, 1.0]))
        assert loss == pytest.approx(2.0, abs=1e-12)

    def test_zero_on_identical_maps(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(size=(16, 32))
        assert ds.affine_invariant_loss(x, x) == pytest.approx(0.0, abs=1e-12)

    def test_symmetry(self):
        rng = np.random.default_rng(2)
        a, b = rng.uniform(size=(8, 16)), rng.uniform(size=(8, 16))
        assert ds.affine_invariant_loss(a, b) == pytest.approx(
            ds.affine_invariant_loss(b, a), rel=1e-12
        )

    def test_affine_invariance_100_random_transforms(self):
        rng = np.random.default_rng(3)
        pred = rng.uniform(size=(16, 32))
        gt = rng.uniform(size=(16, 32))
        base = ds.affine_invariant_loss(pred, gt)
        for _ in range(100):
            a = rng.uniform(0.1, 10.0)
            b = rng.uniform(-5.0, 5.0)
            assert abs(ds.affine_invariant_loss(a * pred + b, gt) - base) <= 1e-9
            assert abs(ds.affine_invariant_loss(pred, a * gt + b) - base) <= 1e-9

    def test_mask_excludes_pixels(self):
        pred = np.array([1.0, 2.0, 4.0, 1000.0])
        gt = np.array([1.0, 2.0, 4.0, -1000.0])
        mask = np.array([True, True, True, False])
        assert ds.affine_invariant_loss(pred, gt, mask) == pytest.approx(0.0, abs=1e-12)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DataError):
            ds.affine_invariant_loss(np.zeros(3), np.zeros(4))


class TestLossGradient:
    def test_zero_outside_mask(self):
        rng = np.random.default_rng(4)
        pred, gt = rng.uniform(size=(8, 16)), rng.uniform(size=(8, 16))
        mask = rng.uniform(size=(8, 16)) > 0.3
        grad = ds.affine_invariant_loss_grad(pred, gt, mask)
        assert (grad[~mask] == 0.0).all()

    def test_finite_difference_frozen_stats(self):
        # the analytic gradient differentiates the frozen-stats loss
        rng = np.random.default_rng(5)
        pred = rng.uniform(1.0, 2.0, size=(6, 12))
        gt = rng.uniform(1.0, 2.0, size=(6, 12))
        sp = ds.align_stats(pred)
        sg = ds.align_stats(gt)
        grad = ds.affine_invariant_loss_grad(pred, gt)
        eps = 1e-7
        rng2 = np.random.default_rng(6)
        for _ in range(20):
            i, j = rng2.integers(6), rng2.integers(12)
            p_plus, p_minus = pred.copy(), pred.copy()
            p_plus[i, j] += eps
            p_minus[i, j] -= eps
            fd = (
                ds.frozen_stats_loss(p_plus, gt, None, sp, sg)
                - ds.frozen_stats_loss(p_minus, gt, None, sp, sg)
            ) / (2 * eps)
            assert grad[i, j] == pytest.approx(fd, rel=1e-4, abs=1e-10)

    def test_magnitude_formula(self):
        rng = np.random.default_rng(7)
        pred, gt = rng.uniform(size=(8, 16)), rng.uniform(size=(8, 16))
        grad = ds.affine_invariant_loss_grad(pred, gt)
        s = ds.align_stats(pred).s
        nz = grad[grad != 0.0]
        np.testing.assert_allclose(np.abs(nz), 1.0 / (s * pred.size), rtol=1e-12)


class TestMedianAlign:
    def test_scales_median_exactly(self):
        rng = np.random.default_rng(8)
        pred = rng.uniform(1.0, 3.0, size=101)
        gt = rng.uniform(2.0, 6.0, size=101)
        aligned = ds.median_align_depth(pred, gt)
        assert np.median(aligned) == pytest.approx(np.median(gt), rel=1e-12)

    def test_pure_scale_is_removed(self):
        gt = np.random.default_rng(9).uniform(1.0, 5.0, size=51)
        np.testing.assert_allclose(ds.median_align_depth(3.7 * gt, gt), gt, rtol=1e-12)

    def test_nonpositive_median_rejected(self):
        with pytest.raises(DegenerateMapError):
            ds.median_align_depth(np.array([-1.0, -2.0]), np.array([1.0, 2.0]))


@settings(max_examples=100, deadline=None)
@given(
    st.integers(0, 2**31),
    st.floats(0.1, 10.0),
    st.floats(-5.0, 5.0),
)
def test_loss_affine_invariance_property(seed, a, b):
    rng = np.random.default_rng(seed)
    pred = rng.uniform(size=30)
    gt = rng.uniform(size=30)
    base = ds.affine_invariant_loss(pred, gt)
    assert abs(ds.affine_invariant_loss(a * pred + b, gt) - base) <= 1e-8
