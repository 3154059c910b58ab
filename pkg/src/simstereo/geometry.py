"""Camera models, box geometry and 3D overlap shared by every other module.

Conventions: camera frame is x right, y down, z forward. Pixel ``(u, v)`` has
its center at integer coordinates. Boxes store half-extents, not full sizes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import BehindCamera, DegenerateDisparity, InvalidCovariance

# Baselines of the two physical rigs (meters).
BASLER_BASELINE = 0.10
ZED2_BASELINE = 0.12
ZED2_RESOLUTION = (960, 512)

# Canonical corner signs: corner k has signs given by the bits of k (x is the
# high bit, z the low bit), 0 -> negative, 1 -> positive.
CORNER_SIGNS = np.array(
    [[1 if k & 4 else -1, 1 if k & 2 else -1, 1 if k & 1 else -1] for k in range(8)],
    dtype=float,
)


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def project(self, points: np.ndarray) -> np.ndarray:
        """Pinhole projection of (N, 3) camera-frame points to (N, 2) pixels."""
        p = np.asarray(points, dtype=float).reshape(-1, 3)
        z = p[:, 2]
        return np.stack([self.fx * p[:, 0] / z + self.cx, self.fy * p[:, 1] / z + self.cy], axis=1)

    def rays(self, uv: np.ndarray) -> np.ndarray:
        """Unnormalized viewing rays (z = 1) through pixel coordinates."""
        uv = np.asarray(uv, dtype=float).reshape(-1, 2)
        return np.stack(
            [(uv[:, 0] - self.cx) / self.fx, (uv[:, 1] - self.cy) / self.fy, np.ones(len(uv))], axis=1
        )

    def scaled(self, factor: float) -> "CameraIntrinsics":
        """Intrinsics of the same camera resampled by ``factor`` (0.5 halves the image)."""
        w, h = int(round(self.width * factor)), int(round(self.height * factor))
        return CameraIntrinsics(
            self.fx * factor, self.fy * factor,
            (self.cx + 0.5) * factor - 0.5, (self.cy + 0.5) * factor - 0.5, w, h,
        )

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height}

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        return cls(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
                   int(d["width"]), int(d["height"]))


@dataclass(frozen=True)
class StereoRig:
    """Rectified stereo pair; the right camera sits ``baseline`` meters along +x."""

    intrinsics: CameraIntrinsics
    baseline: float

    def __post_init__(self):
        if not self.baseline > 0:
            raise ValueError("baseline must be positive")

    def to_dict(self) -> dict:
        return {**self.intrinsics.to_dict(), "baseline": self.baseline}

    @classmethod
    def from_dict(cls, d: dict) -> "StereoRig":
        return cls(CameraIntrinsics.from_dict(d), float(d["baseline"]))


def _as_rotation(R) -> np.ndarray:
    R = np.asarray(R, dtype=float).reshape(3, 3)
    if np.abs(R.T @ R - np.eye(3)).max() > 1e-6 or abs(np.linalg.det(R) - 1.0) > 1e-6:
        raise ValueError("R must be a proper rotation")
    return R


@dataclass(frozen=True, eq=False)
class Obb:
    """Oriented box: corners are ``t + R @ (S * u)`` for ``u`` in {-1, +1}^3."""

    t: np.ndarray
    S: np.ndarray
    R: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).reshape(3)
        S = np.asarray(self.S, dtype=float).reshape(3)
        if np.any(S < 0):
            raise ValueError("half-extents must be non-negative")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "R", _as_rotation(self.R))

    def corners(self) -> np.ndarray:
        """The 8 corners in canonical order, shape (8, 3)."""
        return self.t + (CORNER_SIGNS * self.S) @ self.R.T

    @property
    def volume(self) -> float:
        return float(8.0 * np.prod(self.S))

    def contains(self, points: np.ndarray, margin: float = 0.0) -> np.ndarray:
        local = (np.asarray(points, dtype=float).reshape(-1, 3) - self.t) @ self.R
        return np.all(np.abs(local) <= self.S + margin, axis=1)

    def to_dict(self) -> dict:
        return {"t": self.t.tolist(), "S": self.S.tolist(), "R": self.R.reshape(-1).tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Obb":
        return cls(np.array(d["t"]), np.array(d["S"]), np.array(d["R"]).reshape(3, 3))


@dataclass(frozen=True, eq=False)
class Plane:
    """Plane ``{x : n . x + d = 0}`` with unit normal ``n``."""

    n: np.ndarray
    d: float

    def __post_init__(self):
        n = np.asarray(self.n, dtype=float).reshape(3)
        norm = np.linalg.norm(n)
        if norm == 0:
            raise ValueError("plane normal must be non-zero")
        object.__setattr__(self, "n", n / norm)
        object.__setattr__(self, "d", float(self.d) / norm)

    def distance(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=float).reshape(-1, 3) @ self.n + self.d

    def to_dict(self) -> dict:
        return {"n": self.n.tolist(), "d": self.d}

    @classmethod
    def from_dict(cls, d: dict) -> "Plane":
        return cls(np.array(d["n"]), float(d["d"]))


def disparity_to_depth(d, rig: StereoRig):
    """Depth in meters for a disparity in pixels: ``fx * B / d``."""
    d_arr = np.asarray(d, dtype=float)
    if np.any(d_arr <= 0):
        raise DegenerateDisparity("disparity must be positive")
    z = rig.intrinsics.fx * rig.baseline / d_arr
    return float(z) if z.ndim == 0 else z


def depth_to_disparity(z, rig: StereoRig):
    z_arr = np.asarray(z, dtype=float)
    if np.any(z_arr <= 0):
        raise DegenerateDisparity("depth must be positive")
    d = rig.intrinsics.fx * rig.baseline / z_arr
    return float(d) if d.ndim == 0 else d


def project_obb_vertices(box: Obb, cam: CameraIntrinsics) -> np.ndarray:
    """Pixel coordinates (8, 2) of the box corners in canonical order."""
    corners = box.corners()
    if np.any(corners[:, 2] <= 0):
        raise BehindCamera("box vertex at or behind the image plane")
    return cam.project(corners)


def _signed_permutation(M: np.ndarray, tol: float = 1e-9) -> bool:
    a = np.abs(M)
    ok = (a < tol) | (np.abs(a - 1.0) < tol)
    return bool(ok.all() and np.all((a > 0.5).sum(axis=0) == 1) and np.all((a > 0.5).sum(axis=1) == 1))


def _aabb(box: Obb):
    ext = np.abs(box.R) @ box.S
    return box.t - ext, box.t + ext


def obb_iou_3d(a: Obb, b: Obb, samples: int = 200_000, seed: int = 0) -> float:
    """3D intersection over union of two oriented boxes.

    Boxes whose frames differ by a signed axis permutation are handled
    exactly. Otherwise the overlap is estimated by uniform sampling of the
    bounding volume of both boxes with a seeded generator; the estimate is
    symmetric in ``a`` and ``b`` for a fixed seed.
    """
    lo_a, hi_a = _aabb(a)
    lo_b, hi_b = _aabb(b)
    if np.any(hi_a < lo_b) or np.any(hi_b < lo_a):
        return 0.0
    va, vb = a.volume, b.volume

    M = a.R.T @ b.R
    if _signed_permutation(M):
        ext_b = np.abs(M) @ b.S
        c_b = a.R.T @ (b.t - a.t)
        overlap = np.minimum(a.S, c_b + ext_b) - np.maximum(-a.S, c_b - ext_b)
        inter = float(np.prod(np.clip(overlap, 0.0, None)))
        union = va + vb - inter
        return inter / union if union > 0 else 0.0

    lo = np.minimum(lo_a, lo_b)
    hi = np.maximum(hi_a, hi_b)
    rng = np.random.default_rng(seed)
    n_both = n_either = 0
    chunk = 500_000
    remaining = int(samples)
    while remaining > 0:
        n = min(chunk, remaining)
        p = lo + rng.random((n, 3)) * (hi - lo)
        in_a = a.contains(p)
        in_b = b.contains(p)
        n_both += int(np.count_nonzero(in_a & in_b))
        n_either += int(np.count_nonzero(in_a | in_b))
        remaining -= n
    return n_both / n_either if n_either else 0.0


def rotation_from_covariance(cov, tie_tol: float = 1e-9) -> np.ndarray:
    """Principal axes of a symmetric 3x3 matrix as a proper rotation.

    Columns follow descending eigenvalue. Each column's largest-magnitude entry
    is made positive, then the last column is flipped if needed for det = +1.
    Eigenvalues equal within ``tie_tol`` (relative) span a subspace whose basis
    is chosen closest to the matching identity columns.
    """
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (3, 3):
        raise InvalidCovariance(f"expected a 3x3 matrix, got {cov.shape}")
    scale = max(np.abs(cov).max(), 1e-300)
    if np.abs(cov - cov.T).max() > 1e-6 * max(scale, 1.0):
        raise InvalidCovariance("covariance is not symmetric")
    w, V = np.linalg.eigh(0.5 * (cov + cov.T))
    order = np.argsort(-w, kind="stable")
    w, V = w[order], V[:, order]

    # group near-equal eigenvalues and align each group with the identity
    tol = tie_tol * max(abs(w[0]), abs(w[-1]), 1e-300)
    start = 0
    while start < 3:
        stop = start + 1
        while stop < 3 and abs(w[stop - 1] - w[stop]) <= tol:
            stop += 1
        if stop - start > 1:
            B = V[:, start:stop]
            T = np.eye(3)[:, start:stop]
            U, _, Wt = np.linalg.svd(B.T @ T)
            V[:, start:stop] = B @ (U @ Wt)
        start = stop

    for k in range(3):
        col = V[:, k]
        i = int(np.argmax(np.abs(col)))
        if col[i] < 0:
            V[:, k] = -col
    if np.linalg.det(V) < 0:
        V[:, 2] = -V[:, 2]
    return V


def box_surface_covariance(S) -> np.ndarray:
    """Covariance (box frame) of points spread uniformly over a box surface."""
    a, b, c = np.asarray(S, dtype=float)
    area_x, area_y, area_z = b * c, a * c, a * b  # per face pair, up to a common factor
    total = area_x + area_y + area_z
    if total <= 0:
        return np.zeros((3, 3))
    var = np.array([
        (area_x * a * a + (area_y + area_z) * a * a / 3.0) / total,
        (area_y * b * b + (area_x + area_z) * b * b / 3.0) / total,
        (area_z * c * c + (area_x + area_y) * c * c / 3.0) / total,
    ])
    return np.diag(var)


def obb_covariance(box: Obb) -> np.ndarray:
    """Camera-frame surface covariance of an ideal box."""
    return box.R @ box_surface_covariance(box.S) @ box.R.T


def canonicalize_obb(box: Obb, cov: Optional[np.ndarray] = None) -> Obb:
    """Re-express ``box`` in the principal frame of ``cov``.

    Half-extents along the new axes are the box support widths, which equal a
    permutation of ``box.S`` when the frames agree up to axis relabeling.
    """
    if cov is None:
        cov = obb_covariance(box)
    Rc = rotation_from_covariance(cov)
    Sc = np.abs(Rc.T @ box.R) @ box.S
    return Obb(box.t, Sc, Rc)


def geodesic_deg(Ra: np.ndarray, Rb: np.ndarray) -> float:
    c = (np.trace(Ra.T @ Rb) - 1.0) / 2.0
    return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))


def box_rotation_error_deg(Ra: np.ndarray, Rb: np.ndarray) -> float:
    """Smallest geodesic angle between two box frames over the 24 box symmetries."""
    best = 180.0
    for P in _BOX_SYMMETRIES:
        best = min(best, geodesic_deg(Ra, Rb @ P))
    return best


def _box_symmetries():
    out = []
    import itertools

    for perm in itertools.permutations(range(3)):
        for signs in itertools.product((-1, 1), repeat=3):
            P = np.zeros((3, 3))
            for r, c in enumerate(perm):
                P[r, c] = signs[r]
            if np.linalg.det(P) > 0:
                out.append(P)
    return out


_BOX_SYMMETRIES = _box_symmetries()


def look_at(eye, target, up=(0.0, 0.0, 1.0), roll: float = 0.0):
    """World-to-camera rotation and translation for a camera at ``eye``.

    Returns ``(R_cw, t_cw)`` so that ``x_cam = R_cw @ x_world + t_cw``. The
    camera looks along +z with y pointing down in the image.
    """
    eye = np.asarray(eye, dtype=float)
    fwd = np.asarray(target, dtype=float) - eye
    fwd /= np.linalg.norm(fwd)
    up = np.asarray(up, dtype=float)
    if abs(fwd @ up) > 0.999:
        up = np.array([0.0, 1.0, 0.0]) if abs(fwd[1]) < 0.9 else np.array([1.0, 0.0, 0.0])
    right = np.cross(fwd, up)
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    R_cw = np.stack([right, down, fwd])
    if roll:
        c, s = np.cos(roll), np.sin(roll)
        R_cw = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]) @ R_cw
    return R_cw, -R_cw @ eye
