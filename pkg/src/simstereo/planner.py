"""Grasp poses from boxes, table plane fitting, keypoint lifting and shirt folding."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .codec import SURFACE
from .errors import IncompleteState, NoIntersection, PlaneFitError, Ungraspable
from .geometry import CameraIntrinsics, Obb, Plane, StereoRig
from .stereo import DisparityMap

# --------------------------------------------------------------------------- grasping


@dataclass(frozen=True)
class GraspConfig:
    up: Tuple[float, float, float] = (0.0, 0.0, 1.0)  # gravity-up direction in the box's frame of reference
    horizontal_tol_deg: float = 30.0
    low_ratio: float = 0.6  # top grasp needs height < low_ratio * largest extent
    symmetric_tol: float = 0.10  # two largest extents within 10% count as symmetric
    clearance: float = 0.01
    max_opening: float = 0.10
    side_face_tol: float = 0.7  # |n . up| below this marks a face as a side face


@dataclass
class GraspPlan:
    point: np.ndarray
    approach: np.ndarray  # unit vector the gripper moves along
    gripper_axis: np.ndarray  # unit vector along which the jaws close
    style: str  # "top" or "side"
    width: float

    def to_dict(self) -> dict:
        return {"point": self.point.tolist(), "approach": self.approach.tolist(),
                "gripper_axis": self.gripper_axis.tolist(), "style": self.style, "width": self.width}


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


def _extent_along(box: Obb, direction: np.ndarray) -> float:
    """Full extent of the box projected on a unit direction."""
    return float(2.0 * np.sum(box.S * np.abs(box.R.T @ direction)))


def _horizontal_toward(point: np.ndarray, up: np.ndarray) -> Optional[np.ndarray]:
    h = point - (point @ up) * up
    n = np.linalg.norm(h)
    return h / n if n > 1e-9 else None


def _any_perpendicular(v: np.ndarray) -> np.ndarray:
    a = np.eye(3)[int(np.argmin(np.abs(v)))]
    return _unit(np.cross(v, a))


def _sign_fixed(v: np.ndarray) -> np.ndarray:
    return v if v[int(np.argmax(np.abs(v)))] >= 0 else -v


def _choose_axis(box: Obb, exclude: int, cost) -> np.ndarray:
    """Principal axis other than ``exclude`` minimizing ``cost(axis)``; ties go to the lower index."""
    best_k = min((k for k in range(3) if k != exclude), key=lambda k: (round(cost(box.R[:, k]), 12), k))
    return _sign_fixed(box.R[:, best_k].copy())


def _orthogonal(v: np.ndarray, g: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    w = v - (v @ g) * g
    if np.linalg.norm(w) < 1e-9:
        w = fallback - (fallback @ g) * g
    if np.linalg.norm(w) < 1e-9:
        w = _any_perpendicular(g)
    return _unit(w)


def plan_grasp(box: Obb, config: GraspConfig = GraspConfig()) -> GraspPlan:
    """Choose a top or side grasp for a box given in the robot/camera frame.

    The jaws close along a principal axis perpendicular to the longest one.
    """
    up = _unit(config.up)
    ext = 2.0 * np.asarray(box.S, float)
    order = np.argsort(-ext, kind="stable")
    k1 = int(order[0])
    e1, e2 = ext[k1], ext[order[1]]
    a1 = box.R[:, k1]
    if float(ext.min()) + config.clearance > config.max_opening:
        raise Ungraspable(f"smallest extent {ext.min():.3f} m exceeds the gripper opening")

    toward = _horizontal_toward(box.t, up)
    if toward is None:
        toward = _any_perpendicular(up)
    symmetric = e2 >= (1.0 - config.symmetric_tol) * e1
    tilt = np.degrees(np.arcsin(min(1.0, abs(float(a1 @ up)))))
    height = _extent_along(box, up)
    candidates: List[GraspPlan] = []

    if symmetric:
        # side grasp on the side face nearest the origin
        faces = []
        for k in range(3):
            for sgn in (-1.0, 1.0):
                n = sgn * box.R[:, k]
                if abs(n @ up) < config.side_face_tol:
                    c = box.t + box.S[k] * n
                    faces.append((round(float(np.linalg.norm(c)), 12), k, sgn, c, n))
        faces.sort(key=lambda f: f[:3])
        for _, k, _, c, n in faces:
            g = _choose_axis(box, k, lambda ax: abs(float(ax @ up)))
            approach = _orthogonal(-n, g, toward)
            candidates.append(GraspPlan(c, approach, g, "side", _extent_along(box, g) + config.clearance))
    elif tilt <= config.horizontal_tol_deg and height < config.low_ratio * e1:
        g = _choose_axis(box, k1, lambda ax: abs(float(ax @ up)))
        approach = _orthogonal(-up, g, -up)
        candidates.append(GraspPlan(box.t.copy(), approach, g, "top", _extent_along(box, g) + config.clearance))
    else:
        g = _choose_axis(box, k1, lambda ax: abs(float(ax @ toward)) + abs(float(ax @ up)))
        approach = _orthogonal(toward, g, -up)
        candidates.append(GraspPlan(box.t.copy(), approach, g, "side", _extent_along(box, g) + config.clearance))

    for c in candidates:
        if c.width <= config.max_opening:
            return c
    # fall back to closing across the thinnest principal axis
    k = int(np.argmin(ext))
    g = _sign_fixed(box.R[:, k].copy())
    approach = _orthogonal(toward, g, -up)
    style = "top" if abs(approach @ up) > 0.7 else "side"
    return GraspPlan(box.t.copy(), approach, g, style, float(ext[k]) + config.clearance)


# --------------------------------------------------------------------------- table plane


def backproject(disparity: DisparityMap, rig: StereoRig, mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Camera-frame points (N, 3) for valid, positive disparities under ``mask``."""
    cam = rig.intrinsics
    m = disparity.valid & (disparity.data > 0)
    if mask is not None:
        m &= mask
    v, u = np.nonzero(m)
    z = cam.fx * rig.baseline / disparity.data[m]
    return np.stack([(u - cam.cx) / cam.fx * z, (v - cam.cy) / cam.fy * z, z], axis=1)


def _plane_from_points(p: np.ndarray) -> Optional[Tuple[np.ndarray, float]]:
    c = p.mean(axis=0)
    _, s, vt = np.linalg.svd(p - c, full_matrices=False)
    if len(s) < 2 or s[1] < 1e-12:
        return None
    n = vt[-1]
    return n, float(-n @ c)


def fit_plane_ransac(points: np.ndarray, band: float = 0.01, iterations: int = 200, seed: int = 0,
                     min_inlier_ratio: float = 0.5) -> Plane:
    """RANSAC over 3-point hypotheses, then a least-squares refit on the inliers.

    The normal is oriented so the origin lies on its positive side.
    """
    p = np.asarray(points, float)
    if len(p) < 3:
        raise PlaneFitError("need at least 3 points")
    rng = np.random.default_rng(seed)
    best_count, best = -1, None
    for _ in range(iterations):
        idx = rng.choice(len(p), 3, replace=False)
        a, b, c = p[idx]
        n = np.cross(b - a, c - a)
        nn = np.linalg.norm(n)
        if nn < 1e-12:
            continue
        n /= nn
        d = -n @ a
        count = int(np.count_nonzero(np.abs(p @ n + d) < band))
        if count > best_count:
            best_count, best = count, (n, d)
    if best is None:
        raise PlaneFitError("all samples are degenerate")
    n, d = best
    inliers = np.abs(p @ n + d) < band
    for _ in range(3):
        fit = _plane_from_points(p[inliers])
        if fit is None:
            break
        n, d = fit
        new = np.abs(p @ n + d) < band
        if np.array_equal(new, inliers):
            break
        inliers = new
    ratio = inliers.mean()
    if ratio < min_inlier_ratio:
        raise PlaneFitError(f"inlier ratio {ratio:.2f} below {min_inlier_ratio}")
    if d < 0:
        n, d = -n, -d
    return Plane(n, d)


def fit_table_plane(disparity: DisparityMap, seg: np.ndarray, rig: StereoRig, band: float = 0.01,
                    iterations: int = 200, seed: int = 0, min_pixels: int = 100,
                    min_inlier_ratio: float = 0.5) -> Plane:
    """Plane through the surface-class pixels of a disparity map."""
    pts = backproject(disparity, rig, np.asarray(seg) == SURFACE)
    if len(pts) < min_pixels:
        raise PlaneFitError(f"only {len(pts)} valid surface pixels (need {min_pixels})")
    return fit_plane_ransac(pts, band, iterations, seed, min_inlier_ratio)


def lift_keypoint(uv, plane: Plane, cam: CameraIntrinsics) -> np.ndarray:
    """Intersection of the pixel's viewing ray with ``plane``."""
    ray = cam.rays(np.asarray(uv, float))[0]
    denom = float(plane.n @ ray)
    if abs(denom) <= 1e-6:
        raise NoIntersection("viewing ray is parallel to the plane")
    s = -plane.d / denom
    if s <= 0:
        raise NoIntersection("plane lies behind the camera along this ray")
    return s * ray


# --------------------------------------------------------------------------- folding

FOLD_STEPS = ("sleeve_to_sleeve", "bottom_to_bottom", "sleeves_to_neck", "bottom_to_top")
_REQUIRED = {"sleeve": 2, "neck": 1, "bottom_corner": 2}


@dataclass
class FoldStep:
    index: int  # 1-based position in the sequence
    name: str
    picks: List[np.ndarray]
    places: List[np.ndarray]

    @property
    def pick(self) -> np.ndarray:
        return self.picks[0]

    @property
    def place(self) -> np.ndarray:
        return self.places[0]

    def to_dict(self) -> dict:
        return {"step": self.index, "name": self.name, "picks": [p.tolist() for p in self.picks],
                "places": [p.tolist() for p in self.places]}


@dataclass
class FoldPlan:
    steps: List[FoldStep] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"steps": [s.to_dict() for s in self.steps]}


@dataclass(frozen=True)
class FoldConfig:
    join_ratio: float = 0.15  # points closer than this fraction of shirt length are joined
    camera_right: Tuple[float, float, float] = (1.0, 0.0, 0.0)


def _shirt_frame(kp: Mapping[str, np.ndarray], right: np.ndarray):
    bottom_mid = kp["bottom_corner"].mean(axis=0)
    neck = kp["neck"][0]
    axis = neck - bottom_mid
    length = float(np.linalg.norm(axis))
    if length < 1e-9:
        raise IncompleteState(set())
    axis /= length
    lateral = right - (right @ axis) * axis
    # keep the lateral direction in the shirt plane when the points define one
    pts = np.concatenate([kp["sleeve"], kp["bottom_corner"], kp["neck"]])
    fit = _plane_from_points(pts)
    if fit is not None:
        n = fit[0]
        lateral = lateral - (lateral @ n) * n
    if np.linalg.norm(lateral) < 1e-9:
        lateral = _any_perpendicular(axis)
    return axis, _unit(lateral), length


def identify_fold_state(kps3d: Mapping[str, Sequence], config: FoldConfig = FoldConfig()) -> int:
    """Index (1..4) of the next fold step for the visible keypoints."""
    return plan_fold_step(kps3d, config=config).index


def plan_fold_step(kps3d: Mapping[str, Sequence], plane: Optional[Plane] = None,
                   config: FoldConfig = FoldConfig()) -> FoldStep:
    """Pick/place pair(s) for the fold step implied by the current keypoints."""
    kp = {k: np.asarray(v, float).reshape(-1, 3) for k, v in kps3d.items() if len(v)}
    missing = {k for k, n in _REQUIRED.items() if len(kp.get(k, ())) < n}
    if missing:
        raise IncompleteState(missing)
    if plane is not None:
        kp = {k: v - np.outer(v @ plane.n + plane.d, plane.n) for k, v in kp.items()}
    axis, lateral, length = _shirt_frame(kp, _unit(config.camera_right))
    tol = config.join_ratio * length
    sleeves = kp["sleeve"][np.argsort(kp["sleeve"] @ lateral, kind="stable")]
    bottoms = kp["bottom_corner"][np.argsort(kp["bottom_corner"] @ lateral, kind="stable")]
    neck = kp["neck"][0]
    s_left, s_right = sleeves[0], sleeves[-1]
    b_left, b_right = bottoms[0], bottoms[-1]

    if np.linalg.norm(s_right - s_left) > tol:
        return FoldStep(1, FOLD_STEPS[0], [s_left], [s_right])
    if np.linalg.norm(b_right - b_left) > tol:
        return FoldStep(2, FOLD_STEPS[1], [b_left], [b_right])
    neck_lat = float(neck @ lateral)
    if abs(float(sleeves.mean(axis=0) @ lateral) - neck_lat) > tol:
        picks = [s_left, s_right]
        places = [p + (neck_lat - float(p @ lateral)) * lateral for p in picks]
        return FoldStep(3, FOLD_STEPS[2], picks, places)
    picks = [b_left, b_right]
    neck_ax = float(neck @ axis)
    places = [p + (neck_ax - float(p @ axis)) * axis for p in picks]
    return FoldStep(4, FOLD_STEPS[3], picks, places)


def plan_fold_sequence(states: Sequence[Mapping[str, Sequence]], plane: Optional[Plane] = None,
                       config: FoldConfig = FoldConfig()) -> FoldPlan:
    """Concatenate the per-state steps observed across the four fold states."""
    steps = [plan_fold_step(s, plane, config) for s in states]
    got = [s.index for s in steps]
    if got != [1, 2, 3, 4]:
        raise ValueError(f"fold states map to steps {got}, expected [1, 2, 3, 4]")
    return FoldPlan(steps)
