import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import textured_image
from simstereo.errors import EmptyTarget, ShapeError
from simstereo.pipeline import StereoConfig, match, textured_mask
from simstereo.stereo import (
    CostVolume, DisparityMap, FeatureVolume, aggregate_cost, block_mean, build_cost_volume,
    downsample_disparity, extract_features, full_resolution_scale, huber, huber_disparity_loss,
    loss_gradient, peak_ratio, semi_global_aggregate, soft_argmin, to_full_resolution, to_slice_units,
)


def brute_cost_volume(L, R, n):
    c, h, w = L.shape
    out = np.zeros((n, h, w))
    for i in range(n):
        for y in range(h):
            for x in range(i, w):
                s = 0.0
                for k in range(c):
                    s += L[k, y, x] * R[k, y, x - i]
                out[i, y, x] = s
    return out


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(1, 6), st.integers(1, 8), st.integers(1, 10), st.integers(0, 2**31))
def test_cost_volume_matches_brute_force(c, h, w, n, seed):
    rng = np.random.default_rng(seed)
    L, R = rng.standard_normal((2, c, h, w))
    vol = build_cost_volume(FeatureVolume(L), FeatureVolume(R), n)
    assert vol.data.shape == (n, h, w)
    np.testing.assert_array_equal(vol.data, brute_cost_volume(L, R, n))


def test_cost_volume_shape_mismatch():
    with pytest.raises(ShapeError):
        build_cost_volume(FeatureVolume(np.zeros((2, 3, 4))), FeatureVolume(np.zeros((2, 3, 5))))
    with pytest.raises(ValueError):
        build_cost_volume(FeatureVolume(np.zeros((2, 3, 4))), FeatureVolume(np.zeros((2, 3, 4))), 0)


def test_features_are_unit_norm_and_shift_covariant():
    rng = np.random.default_rng(0)
    img = textured_image(rng, 64, 96)
    f = extract_features(img)
    assert f.shape[1:] == (16, 24)
    norms = np.sqrt((f.data ** 2).sum(axis=0))
    assert np.allclose(norms[norms > 0], 1.0)
    shifted = np.roll(img, 8, axis=1)
    g = extract_features(shifted)
    np.testing.assert_allclose(g.data[:, :, 6:-4], f.data[:, :, 4:-6], atol=1e-12)


def test_features_reject_bad_size():
    with pytest.raises(ShapeError):
        extract_features(np.zeros((10, 12)))


def _random_volume(rng, n=5, h=7, w=9):
    L, R = rng.standard_normal((2, 3, h, w))
    return build_cost_volume(FeatureVolume(L), FeatureVolume(R), n)


@pytest.mark.parametrize("kind", ["box", "gaussian", "bilateral"])
def test_aggregation_keeps_zero_region(kind):
    rng = np.random.default_rng(1)
    vol = _random_volume(rng)
    guide = rng.random(vol.data.shape[1:])
    out = aggregate_cost(vol, 3, kind, 1.0, guide)
    assert np.all(out.data[vol.zero_region()] == 0.0)


def test_box_aggregation_preserves_constants():
    c = np.full((4, 6, 8), 0.5)
    vol = CostVolume(np.where(CostVolume(c).zero_region(), 0.0, c))
    out = aggregate_cost(vol, 5, "box")
    valid = ~vol.zero_region()
    np.testing.assert_allclose(out.data[valid], 0.5)


def test_aggregation_validation():
    vol = CostVolume(np.zeros((2, 4, 4)))
    with pytest.raises(ValueError):
        aggregate_cost(vol, 4)
    with pytest.raises(ValueError):
        aggregate_cost(vol, 3, "bilateral")
    with pytest.raises(ShapeError):
        aggregate_cost(vol, 3, "bilateral", guide=np.zeros((3, 3)))
    with pytest.raises(ValueError):
        aggregate_cost(vol, 3, "median")


def test_sgm_zero_region_and_constant_volume():
    vol = CostVolume(np.zeros((4, 5, 6)))
    valid = ~vol.zero_region()
    vol.data[valid] = 0.3
    out = semi_global_aggregate(vol, 0.05, 0.3)
    assert np.all(out.data[vol.zero_region()] == 0.0)
    with pytest.raises(ValueError):
        semi_global_aggregate(vol, 0.5, 0.1)


def test_sgm_fills_in_a_weak_pixel():
    # one pixel with a flat score profile inside a consistent region
    n, h, w = 6, 5, 12
    data = np.zeros((n, h, w))
    data[2] = 1.0
    data[:, 2, 6] = 0.5
    vol = CostVolume(np.where(CostVolume(data).zero_region(), 0.0, data))
    out = semi_global_aggregate(vol)
    assert out.data[:, 2, 6].argmax() == 2


def test_soft_argmin_peaked_volume():
    n, h, w = 9, 3, 20
    data = np.zeros((n, h, w))
    data[4] = 1.0
    vol = CostVolume(data, disparity_stride=2.0)
    d = soft_argmin(vol, temperature=0.01)
    np.testing.assert_allclose(d.data, 8.0, atol=1e-6)
    assert d.valid.all()


def test_soft_argmin_window_ignores_distant_peak():
    data = np.zeros((11, 1, 20))
    data[2] = 1.0
    data[9] = 0.98
    vol = CostVolume(data, 1.0)
    wide = soft_argmin(vol, temperature=0.5)
    narrow = soft_argmin(vol, temperature=0.5, window=2)
    assert abs(narrow.data[0, 15] - 2.0) < abs(wide.data[0, 15] - 2.0)
    assert narrow.data[0, 15] == pytest.approx(2.0, abs=0.3)


def test_soft_argmin_ratio_threshold():
    data = np.zeros((5, 1, 10))
    data[1, 0, 8] = 1.0
    data[4, 0, 8] = 0.99
    data[2, 0, 9] = 1.0
    vol = CostVolume(data, 1.0)
    d = soft_argmin(vol, 0.1, ratio_threshold=1.5)
    assert not d.valid[0, 8]
    assert d.valid[0, 9]
    with pytest.raises(ValueError):
        soft_argmin(vol, 0.0)


def test_peak_ratio_values():
    s = np.array([0.2, 1.0, 0.9, 0.1, 0.5])[:, None, None]
    assert peak_ratio(s, exclude=1)[0, 0] == pytest.approx(2.0)
    assert peak_ratio(-np.abs(s), exclude=1)[0, 0] == 0.0


@given(st.floats(-10, 10, allow_nan=False), st.floats(0.1, 5, allow_nan=False))
def test_huber_is_continuous_at_delta(e, delta):
    lo, hi = huber(np.array([delta - 1e-9]), delta), huber(np.array([delta + 1e-9]), delta)
    assert abs(hi[0] - lo[0]) < 1e-7
    assert huber(np.array([e]), delta)[0] >= 0


def test_huber_loss_errors():
    a = DisparityMap(np.zeros((2, 2)))
    with pytest.raises(ShapeError):
        huber_disparity_loss(a, DisparityMap(np.zeros((2, 3))))
    with pytest.raises(EmptyTarget):
        huber_disparity_loss(a, DisparityMap(np.zeros((2, 2)), np.zeros((2, 2), bool)))


def test_loss_gradient_matches_finite_differences():
    rng = np.random.default_rng(4)
    vol = CostVolume(rng.standard_normal((5, 3, 4)), 2.0)
    target = DisparityMap(rng.uniform(0, 8, (3, 4)))
    g = loss_gradient(vol, target, 0.7, 1.0)
    h = 1e-6
    num = np.zeros_like(g)
    for idx in np.ndindex(vol.data.shape):
        p, m = vol.data.copy(), vol.data.copy()
        p[idx] += h
        m[idx] -= h
        fp = huber_disparity_loss(soft_argmin(CostVolume(p, 2.0), 0.7), target)
        fm = huber_disparity_loss(soft_argmin(CostVolume(m, 2.0), 0.7), target)
        num[idx] = (fp - fm) / (2 * h)
    np.testing.assert_allclose(g, num, atol=1e-8)


def test_downsample_disparity_median_and_invalid():
    d = np.arange(16, dtype=float).reshape(4, 4)
    v = np.ones((4, 4), bool)
    v[:2, :2] = False
    low = downsample_disparity(DisparityMap(d, v), 2)
    assert not low.valid[0, 0]
    assert low.data[1, 1] == pytest.approx(np.median([10, 11, 14, 15]))
    with pytest.raises(ShapeError):
        downsample_disparity(DisparityMap(d), 3)


def test_unit_conversions():
    assert full_resolution_scale(2.0) == 2.0
    d = DisparityMap(np.array([[3.0]]))
    assert to_full_resolution(d, 2.0).data[0, 0] == 6.0
    assert to_slice_units(to_full_resolution(d, 2.0), 2.0).data[0, 0] == 3.0


def test_block_mean():
    x = np.arange(16, dtype=float).reshape(4, 4)
    np.testing.assert_allclose(block_mean(x, 2), [[2.5, 4.5], [10.5, 12.5]])


def test_match_recovers_uniform_shift():
    rng = np.random.default_rng(7)
    left = textured_image(rng, 96, 160)
    k = 20
    right = np.empty_like(left)
    right[:, :-k] = left[:, k:]
    right[:, -k:] = left[:, -1:]
    res = match(left, right)
    d = res.full.data[:, k + 8:-8][res.full.valid[:, k + 8:-8]]
    assert np.median(d) == pytest.approx(k, abs=0.5)
    assert res.low.shape == (24, 40)
    assert res.full.shape == (96, 160)


def test_match_identical_images_gives_zero():
    rng = np.random.default_rng(8)
    img = textured_image(rng, 64, 96)
    res = match(img, img)
    m = textured_mask(img) & res.full.valid
    assert np.median(res.full.data[m]) < 0.5


def test_stereo_config_validation():
    with pytest.raises(ValueError):
        StereoConfig(num_slices=0)
    with pytest.raises(ValueError):
        StereoConfig(kernel_size=4)
    assert StereoConfig().max_full_disparity == 128


def test_textured_mask_flat_image():
    assert not textured_mask(np.full((32, 32), 0.5)).any()
    rng = np.random.default_rng(0)
    assert textured_mask(textured_image(rng, 32, 32)).mean() > 0.9
