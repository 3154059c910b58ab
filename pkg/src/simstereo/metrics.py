"""Detection, keypoint and disparity metrics."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .codec import Detection, Keypoint, KeypointSet
from .errors import ShapeError, UndefinedMetric
from .geometry import Obb, obb_iou_3d
from .stereo import DisparityMap

log = logging.getLogger(__name__)

IOU_THRESHOLD = 0.25
KEYPOINT_RADIUS = 20.0
OUTLIER_PX = 3.0


@dataclass
class MatchResult:
    tp: List[Tuple[int, int, float]]  # (pred index, gt index, iou)
    fp: List[int]
    fn: List[int]

    def pred_is_tp(self, n_preds: int) -> np.ndarray:
        flags = np.zeros(n_preds, dtype=bool)
        for p, _, _ in self.tp:
            flags[p] = True
        return flags


@dataclass
class PrCurve:
    points: List[Tuple[float, float]]  # (recall, precision), recall non-decreasing
    ap: float
    thresholds: List[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"ap": self.ap, "points": [list(p) for p in self.points], "thresholds": list(self.thresholds)}


def _confidence_order(conf: Sequence[float]) -> np.ndarray:
    # stable: equal confidences keep input order
    return np.argsort(-np.asarray(conf, dtype=float), kind="stable")


def match_detections(preds: Sequence[Detection], gts: Sequence[Obb], iou_thresh: float = IOU_THRESHOLD,
                     iou_fn: Optional[Callable[[Obb, Obb], float]] = None) -> MatchResult:
    """Greedy matching in descending confidence.

    Each prediction takes the unmatched ground truth with the highest IoU,
    provided that IoU is strictly above ``iou_thresh``.
    """
    iou_fn = iou_fn or obb_iou_3d
    iou = np.zeros((len(preds), len(gts)))
    for i, p in enumerate(preds):
        for j, g in enumerate(gts):
            iou[i, j] = iou_fn(p.box, g)
    return _greedy(iou, [p.confidence for p in preds], lambda x: x > iou_thresh, maximize=True)


def _greedy(score: np.ndarray, conf, accept, maximize: bool) -> MatchResult:
    n_p, n_g = score.shape
    taken = np.zeros(n_g, dtype=bool)
    tp, fp = [], []
    for i in _confidence_order(conf):
        best_j, best = -1, None
        for j in range(n_g):
            if taken[j] or not accept(score[i, j]):
                continue
            if best is None or (score[i, j] > best if maximize else score[i, j] < best):
                best_j, best = j, score[i, j]
        if best_j >= 0:
            taken[best_j] = True
            tp.append((int(i), best_j, float(best)))
        else:
            fp.append(int(i))
    fn = [j for j in range(n_g) if not taken[j]]
    return MatchResult(tp, sorted(fp), fn)


def _sweep(conf: np.ndarray, is_tp: np.ndarray, n_gt: int, n_thresholds: int = 11,
           interpolation: str = "11point") -> PrCurve:
    """Precision/recall over a confidence sweep and the area under it.

    ``11point`` evaluates thresholds ``0, 0.1, ..., 1`` (a detection counts at
    threshold ``t`` when its confidence is ``>= t``). ``continuous`` uses every
    distinct confidence. Either way the area is the sum over recall steps of
    the interpolated precision (maximum precision at any recall at least as
    large).
    """
    if interpolation == "11point":
        thresholds = np.linspace(0.0, 1.0, n_thresholds)[::-1]
    elif interpolation == "continuous":
        thresholds = np.unique(conf)[::-1]
    else:
        raise ValueError(f"unknown interpolation {interpolation!r}")
    pts, used = [], []
    for t in thresholds:
        sel = conf >= t - 1e-12
        n = int(sel.sum())
        if n == 0:
            continue
        tp = int(is_tp[sel].sum())
        pts.append((tp / n_gt, tp / n))
        used.append(float(t))
    if not pts:
        return PrCurve([], 0.0, [])
    rec = np.array([p[0] for p in pts])
    prec = np.array([p[1] for p in pts])
    interp = np.maximum.accumulate(prec[::-1])[::-1]
    prev = np.concatenate([[0.0], rec[:-1]])
    ap = float(np.sum((rec - prev) * interp))
    return PrCurve([(float(r), float(p)) for r, p in pts], ap, used)


def compute_map_3d(scenes: Sequence[Tuple[Sequence[Detection], Sequence[Obb]]],
                   iou_thresh: float = IOU_THRESHOLD, interpolation: str = "11point",
                   iou_fn: Optional[Callable[[Obb, Obb], float]] = None) -> Tuple[float, PrCurve]:
    """Average precision of 3D box detections pooled over scenes."""
    n_gt = sum(len(g) for _, g in scenes)
    if n_gt == 0:
        raise UndefinedMetric("no ground-truth boxes in any scene")
    conf, tp = [], []
    for preds, gts in scenes:
        m = match_detections(preds, gts, iou_thresh, iou_fn)
        conf.extend(p.confidence for p in preds)
        tp.extend(m.pred_is_tp(len(preds)))
    curve = _sweep(np.asarray(conf, float), np.asarray(tp, bool), n_gt, interpolation=interpolation)
    return curve.ap, curve


def match_keypoints(preds: Sequence[Keypoint], gts: Sequence[Tuple[float, float]],
                    radius: float = KEYPOINT_RADIUS) -> MatchResult:
    """One-to-one greedy matching; a prediction within ``radius`` (inclusive) of a free GT is a TP."""
    d = np.zeros((len(preds), len(gts)))
    for i, p in enumerate(preds):
        for j, g in enumerate(gts):
            d[i, j] = np.hypot(p.u - g[0], p.v - g[1])
    return _greedy(d, [p.score for p in preds], lambda x: x <= radius, maximize=False)


def _gt_points(gt) -> Dict[str, List[Tuple[float, float]]]:
    if isinstance(gt, KeypointSet):
        return {k: [(p.u, p.v) for p in v] for k, v in gt.points.items()}
    return {k: [tuple(p[:2]) for p in v] for k, v in gt.items()}


def compute_keypoint_map(preds: Sequence[KeypointSet], gts: Sequence, radius: float = KEYPOINT_RADIUS,
                         interpolation: str = "11point") -> Tuple[Dict[str, float], float, Dict[str, PrCurve]]:
    """Per-class AP, their mean and the per-class curves.

    ``gts`` holds one ``KeypointSet`` or ``{class: [(u, v), ...]}`` per image.
    """
    if len(preds) != len(gts):
        raise ShapeError("prediction and ground-truth image counts differ")
    gt_sets = [_gt_points(g) for g in gts]
    classes = sorted(set().union(*[set(g) for g in gt_sets], *[set(p.points) for p in preds]))
    per_class, curves = {}, {}
    for cls in classes:
        n_gt = sum(len(g.get(cls, [])) for g in gt_sets)
        if n_gt == 0:
            log.info("keypoint class %s has no ground truth; excluded from the mean", cls)
            continue
        conf, tp = [], []
        for p, g in zip(preds, gt_sets):
            pk = p[cls]
            m = match_keypoints(pk, g.get(cls, []), radius)
            conf.extend(k.score for k in pk)
            tp.extend(m.pred_is_tp(len(pk)))
        c = _sweep(np.asarray(conf, float), np.asarray(tp, bool), n_gt, interpolation=interpolation)
        per_class[cls] = c.ap
        curves[cls] = c
    if not per_class:
        raise UndefinedMetric("no keypoint ground truth in any class")
    return per_class, float(np.mean(list(per_class.values()))), curves


@dataclass
class EpeResult:
    epe: float
    outliers: float  # fraction of pixels with error > 3 px
    count: int

    def to_dict(self) -> dict:
        return {"epe": self.epe, "outliers": self.outliers, "count": self.count}


def disparity_errors(pred: DisparityMap, gt: DisparityMap, mask: Optional[np.ndarray] = None) -> np.ndarray:
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    m = pred.valid & gt.valid
    if mask is not None:
        m &= mask
    return np.abs(pred.data[m] - gt.data[m])


def disparity_epe(pred: DisparityMap, gt: DisparityMap, mask: Optional[np.ndarray] = None,
                  outlier_px: float = OUTLIER_PX) -> EpeResult:
    """Mean absolute disparity error and outlier rate over pixels valid in both maps."""
    e = disparity_errors(pred, gt, mask)
    if e.size == 0:
        raise UndefinedMetric("no pixels are valid in both maps")
    return EpeResult(float(e.mean()), float(np.mean(e > outlier_px)), int(e.size))


def pooled_epe(errors: Sequence[np.ndarray], outlier_px: float = OUTLIER_PX) -> EpeResult:
    """EPE over the union of per-image error samples."""
    e = np.concatenate([np.asarray(x, float).ravel() for x in errors]) if errors else np.empty(0)
    if e.size == 0:
        raise UndefinedMetric("no pixels to evaluate")
    return EpeResult(float(e.mean()), float(np.mean(e > outlier_px)), int(e.size))
