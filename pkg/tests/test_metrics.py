import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linear_sum_assignment

from simstereo.codec import Detection, Keypoint, KeypointSet
from simstereo.errors import ShapeError, UndefinedMetric
from simstereo.geometry import Obb, obb_iou_3d
from simstereo.metrics import (
    compute_keypoint_map, compute_map_3d, disparity_epe, match_detections, match_keypoints,
    pooled_epe,
)
from simstereo.stereo import DisparityMap

UNIT = Obb(np.zeros(3), np.ones(3))


def box(x, S=(1.0, 1.0, 1.0)):
    return Obb(np.array([x, 0.0, 0.0]), np.array(S))


def det(b, c):
    return Detection(b, c)


def test_iou_boundary_cases_are_exact():
    quarter = Obb(np.zeros(3), np.array([1.0, 0.5, 0.5]))
    assert obb_iou_3d(UNIT, quarter) == 0.25


def test_single_match():
    m = match_detections([det(UNIT, 0.9)], [UNIT])
    assert (len(m.tp), len(m.fp), len(m.fn)) == (1, 0, 0)


def test_iou_at_threshold_is_not_a_match():
    quarter = Obb(np.zeros(3), np.array([1.0, 0.5, 0.5]))
    m = match_detections([det(quarter, 0.9)], [UNIT])
    assert (len(m.tp), len(m.fp), len(m.fn)) == (0, 1, 1)
    above = Obb(np.zeros(3), np.array([1.0, 0.5, 0.5 + 2 ** -10]))
    assert len(match_detections([det(above, 0.9)], [UNIT]).tp) == 1


def test_low_iou_gives_fp_and_fn():
    b = box(1.5)  # IoU 0.5 / 3.5 = 1/7
    m = match_detections([det(b, 0.9)], [UNIT])
    assert (len(m.tp), len(m.fp), len(m.fn)) == (0, 1, 1)


def test_duplicate_prediction_is_fp():
    m = match_detections([det(box(0.1), 0.6), det(box(0.0), 0.9)], [UNIT])
    assert [t[0] for t in m.tp] == [1]
    assert m.fp == [0]


def test_prediction_takes_highest_iou_free_gt():
    gts = [box(0.0), box(0.5)]
    m = match_detections([det(box(0.45), 0.9)], gts)
    assert m.tp[0][1] == 1


def test_map_perfect_and_empty():
    scenes = [([det(box(3.0 * i), 1.0)], [box(3.0 * i)]) for i in range(10)]
    assert compute_map_3d(scenes)[0] == 1.0
    assert compute_map_3d([([], g) for _, g in scenes])[0] == 0.0
    with pytest.raises(UndefinedMetric):
        compute_map_3d([([det(UNIT, 1.0)], [])])


def test_map_half_recall():
    ap, curve = compute_map_3d([([det(box(0.0), 1.0)], [box(0.0), box(5.0)])])
    assert ap == pytest.approx(0.5, abs=1e-12)
    assert all(0 <= p <= 1 for _, p in curve.points)


def test_map_hand_computed_sweep():
    # TP at 0.9, FP at 0.5, TP at 0.3 with 3 GTs: AP = 1/3 * 1 + 1/3 * 2/3 = 5/9
    gts = [box(0.0), box(5.0), box(10.0)]
    preds = [det(box(0.0), 0.9), det(box(20.0), 0.5), det(box(5.0), 0.3)]
    for mode in ("11point", "continuous"):
        ap, curve = compute_map_3d([(preds, gts)], interpolation=mode)
        assert ap == pytest.approx(5.0 / 9.0, abs=1e-12)
        recalls = [r for r, _ in curve.points]
        assert recalls == sorted(recalls)


def test_map_low_confidence_tail_is_dropped_below_first_threshold():
    # a TP at confidence 0.05 only counts at threshold 0
    ap, _ = compute_map_3d([([det(UNIT, 0.05)], [UNIT])])
    assert ap == pytest.approx(1.0)


def test_unknown_interpolation():
    with pytest.raises(ValueError):
        compute_map_3d([([det(UNIT, 1.0)], [UNIT])], interpolation="trapezoid")


def _random_scene(rng, n_gt=3, n_pred=4):
    gts = [box(3.0 * i) for i in range(n_gt)]
    preds = []
    for _ in range(n_pred):
        g = rng.integers(0, n_gt + 1)
        x = 3.0 * g + rng.uniform(-0.6, 0.6)
        preds.append(det(box(x), float(np.round(rng.uniform(0, 1), 3))))
    return preds, gts


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_map_is_order_invariant(seed):
    rng = np.random.default_rng(seed)
    scenes = [_random_scene(rng) for _ in range(3)]
    # distinct confidences: ties are broken by list order
    flat = [d.confidence for p, _ in scenes for d in p]
    if len(set(flat)) < len(flat):
        return
    ap = compute_map_3d(scenes)[0]
    shuffled = [(list(rng.permutation(np.array(p, dtype=object))), g) for p, g in scenes]
    assert compute_map_3d(shuffled)[0] == pytest.approx(ap, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_zero_confidence_fp_never_helps_and_tp_never_hurts(seed):
    rng = np.random.default_rng(seed)
    preds, gts = _random_scene(rng)
    ap = compute_map_3d([(preds, gts)])[0]
    worse = compute_map_3d([(preds + [det(box(100.0), 0.0)], gts)])[0]
    assert worse <= ap + 1e-12
    extra_gt = box(50.0)
    base = compute_map_3d([(preds, gts + [extra_gt])])[0]
    better = compute_map_3d([(preds + [det(extra_gt, 1.0)], gts + [extra_gt])])[0]
    assert better >= base - 1e-12


def test_greedy_agrees_with_optimal_assignment_mostly():
    rng = np.random.default_rng(0)
    agree = 0
    trials = 300
    for _ in range(trials):
        n_g, n_p = rng.integers(1, 6, size=2)
        gts = [Obb(rng.uniform(-1, 1, 3), rng.uniform(0.2, 0.6, 3)) for _ in range(n_g)]
        preds = [det(Obb(gts[rng.integers(n_g)].t + rng.normal(0, 0.15, 3), rng.uniform(0.2, 0.6, 3)),
                     float(rng.random())) for _ in range(n_p)]
        m = match_detections(preds, gts)
        ok = np.array([[obb_iou_3d(p.box, g) > 0.25 for g in gts] for p in preds], float)
        r, c = linear_sum_assignment(-ok)
        agree += len(m.tp) == int(ok[r, c].sum())
    assert agree / trials >= 0.95


def test_keypoint_radius_boundary():
    gt = [(100.0, 100.0)]
    assert len(match_keypoints([Keypoint(119.0, 100.0, 1.0)], gt).tp) == 1
    assert len(match_keypoints([Keypoint(120.0, 100.0, 1.0)], gt).tp) == 1
    m = match_keypoints([Keypoint(121.0, 100.0, 1.0)], gt)
    assert (len(m.tp), len(m.fp), len(m.fn)) == (0, 1, 1)


def test_keypoint_map_per_class_and_exclusion():
    preds = [KeypointSet({"neck": [Keypoint(10, 10, 0.9)], "sleeve": [Keypoint(50, 50, 0.8)],
                          "bottom_corner": [Keypoint(0, 0, 0.5)]})]
    gts = [{"neck": [(12.0, 10.0)], "sleeve": [(50.0, 80.0)], "bottom_corner": []}]
    per_class, mean, _ = compute_keypoint_map(preds, gts)
    assert per_class == {"neck": 1.0, "sleeve": 0.0}
    assert mean == 0.5


def test_keypoint_map_self_evaluation():
    rng = np.random.default_rng(3)
    gts, preds = [], []
    for _ in range(32):
        g = {c: [tuple(rng.uniform(0, 500, 2)) for _ in range(n)]
             for c, n in (("sleeve", 2), ("neck", 1), ("bottom_corner", 2))}
        gts.append(g)
        preds.append(KeypointSet({c: [Keypoint(u, v, 1.0) for u, v in pts] for c, pts in g.items()}))
    assert compute_keypoint_map(preds, gts)[1] == 1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.floats(-300, 300), st.floats(-300, 300))
def test_keypoint_map_translation_invariant(seed, du, dv):
    rng = np.random.default_rng(seed)
    gts = [{"neck": [tuple(rng.uniform(0, 100, 2))], "sleeve": [tuple(rng.uniform(0, 100, 2)) for _ in range(2)]}]
    preds = [KeypointSet({c: [Keypoint(u + rng.normal(0, 12), v + rng.normal(0, 12), float(rng.random()))
                              for u, v in pts] for c, pts in gts[0].items()})]
    ap = compute_keypoint_map(preds, gts)[1]
    moved_g = [{c: [(u + du, v + dv) for u, v in pts] for c, pts in gts[0].items()}]
    moved_p = [KeypointSet({c: [Keypoint(k.u + du, k.v + dv, k.score) for k in ks]
                            for c, ks in preds[0].points.items()})]
    assert compute_keypoint_map(moved_p, moved_g)[1] == pytest.approx(ap, abs=1e-9)


def test_keypoint_map_errors():
    with pytest.raises(ShapeError):
        compute_keypoint_map([KeypointSet()], [])
    with pytest.raises(UndefinedMetric):
        compute_keypoint_map([KeypointSet({"neck": [Keypoint(1, 1, 1)]})], [{"neck": []}])


def test_disparity_epe_cases():
    gt = DisparityMap(np.full((4, 5), 10.0))
    r = disparity_epe(gt, gt)
    assert (r.epe, r.outliers, r.count) == (0.0, 0.0, 20)
    r = disparity_epe(DisparityMap(gt.data + 1.0), gt)
    assert (r.epe, r.outliers) == (1.0, 0.0)
    r = disparity_epe(DisparityMap(gt.data + 4.0), gt)
    assert (r.epe, r.outliers) == (4.0, 1.0)
    with pytest.raises(UndefinedMetric):
        disparity_epe(DisparityMap(gt.data, np.zeros((4, 5), bool)), gt)
    with pytest.raises(ShapeError):
        disparity_epe(DisparityMap(np.zeros((2, 2))), gt)


def test_pooled_epe_weights_pixels():
    r = pooled_epe([np.zeros(3), np.full(1, 4.0)])
    assert r.epe == 1.0 and r.outliers == 0.25 and r.count == 4
    with pytest.raises(UndefinedMetric):
        pooled_epe([])
