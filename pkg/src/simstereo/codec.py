"""Encode scene labels into prediction-head tensors and decode them back.

Head layout for an ``W0 x H0`` left image:

* ``seg`` (H0, W0) class ids, see ``SEG_CLASSES``
* ``inst_heatmap`` (H0, W0) Gaussian bumps at projected box centroids
* ``vertex_offsets`` (H0/8, W0/8, 16) offsets from the cell center to the 8
  projected corners, in units of 8 pixels
* ``z_centroid`` (H0/8, W0/8) centroid depth in meters
* ``covariance`` (H0/8, W0/8, 6) as (xx, yy, zz, xy, xz, yz)
* ``kp_heatmaps`` (K, H0, W0) one Gaussian heatmap per keypoint class
* ``disparity_full`` (H0, W0) full-resolution disparity

Cell ``(i, j)`` of the /8 grid covers pixels ``8i..8i+7`` by ``8j..8j+7`` and
is centered at pixel coordinate ``(8j + 3.5, 8i + 3.5)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage
from scipy.special import logsumexp

from . import io
from .errors import BehindCamera, DegenerateBox, LabelError, ShapeError, SkippedObject
from .geometry import (
    CORNER_SIGNS, CameraIntrinsics, Obb, canonicalize_obb, obb_covariance,
    project_obb_vertices, rotation_from_covariance,
)
from .stereo import DisparityMap, block_mean, downsample_disparity, huber, to_gray

GRID = 8
SEG_CLASSES = ("background", "surface", "object")
BACKGROUND, SURFACE, OBJECT = range(3)

# Per-pixel scene kinds produced by the rasterizer.
KIND_NONE, KIND_TABLE_TOP, KIND_TABLE_SIDE, KIND_OBJECT, KIND_DISTRACTOR, KIND_ROOM = range(6)
KIND_TO_CLASS = {
    KIND_NONE: BACKGROUND,
    KIND_TABLE_TOP: SURFACE,
    KIND_TABLE_SIDE: BACKGROUND,
    KIND_OBJECT: OBJECT,
    KIND_DISTRACTOR: BACKGROUND,
    KIND_ROOM: BACKGROUND,
}

SHIRT_KEYPOINTS = ("sleeve", "neck", "bottom_corner")
COV_INDEX = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))


@dataclass(frozen=True)
class CodecConfig:
    sigma: float = 8.0
    supervise_threshold: float = 0.3
    detect_threshold: float = 0.3
    nms_window: int = 17
    kp_sigma: float = 3.0
    kp_threshold: float = 0.3
    kp_radius: float = 10.0
    max_condition: float = 1e8


@dataclass
class HeadTensors:
    seg: np.ndarray
    inst_heatmap: np.ndarray
    vertex_offsets: np.ndarray
    z_centroid: np.ndarray
    covariance: np.ndarray
    kp_heatmaps: np.ndarray
    disparity_full: DisparityMap
    kp_classes: Tuple[str, ...] = SHIRT_KEYPOINTS
    disparity_low: Optional[DisparityMap] = None
    seg_logits: Optional[np.ndarray] = None

    @classmethod
    def empty(cls, width: int, height: int, kp_classes: Sequence[str] = SHIRT_KEYPOINTS) -> "HeadTensors":
        if width % GRID or height % GRID:
            raise ShapeError(f"image size {width}x{height} must be divisible by {GRID}")
        hg, wg = height // GRID, width // GRID
        return cls(
            seg=np.full((height, width), BACKGROUND, dtype=np.uint8),
            inst_heatmap=np.zeros((height, width)),
            vertex_offsets=np.zeros((hg, wg, 16)),
            z_centroid=np.zeros((hg, wg)),
            covariance=np.zeros((hg, wg, 6)),
            kp_heatmaps=np.zeros((len(kp_classes), height, width)),
            disparity_full=DisparityMap(np.zeros((height, width)), np.zeros((height, width), bool)),
            kp_classes=tuple(kp_classes),
        )

    @property
    def size(self) -> Tuple[int, int]:
        h, w = self.inst_heatmap.shape
        return w, h

    def supervised_mask(self, threshold: float = 0.3) -> np.ndarray:
        return cell_heat(self.inst_heatmap) > threshold


@dataclass(frozen=True)
class Detection:
    box: Obb
    confidence: float

    def to_dict(self) -> dict:
        return {**self.box.to_dict(), "confidence": float(self.confidence)}

    @classmethod
    def from_dict(cls, d: dict) -> "Detection":
        return cls(Obb.from_dict(d), float(d["confidence"]))


@dataclass(frozen=True)
class Keypoint:
    u: float
    v: float
    score: float


@dataclass
class KeypointSet:
    points: Dict[str, List[Keypoint]] = field(default_factory=dict)

    def __getitem__(self, name: str) -> List[Keypoint]:
        return self.points.get(name, [])

    def classes(self) -> List[str]:
        return sorted(self.points)

    def to_list(self) -> list:
        out = []
        for name in sorted(self.points):
            for kp in self.points[name]:
                out.append({"class": name, "u": float(kp.u), "v": float(kp.v), "score": float(kp.score)})
        return out

    @classmethod
    def from_list(cls, items: list) -> "KeypointSet":
        pts: Dict[str, List[Keypoint]] = {}
        for it in items:
            pts.setdefault(it["class"], []).append(Keypoint(float(it["u"]), float(it["v"]), float(it.get("score", 1.0))))
        return cls(pts)


# --------------------------------------------------------------------------- grid helpers

def cell_centers(width: int, height: int) -> Tuple[np.ndarray, np.ndarray]:
    """Pixel coordinates of /8 cell centers as (u, v) grids."""
    uc = np.arange(width // GRID) * GRID + (GRID - 1) / 2.0
    vc = np.arange(height // GRID) * GRID + (GRID - 1) / 2.0
    return np.meshgrid(uc, vc)


def cell_heat(heatmap: np.ndarray) -> np.ndarray:
    """Heatmap value at each /8 cell center (mean of the four central pixels)."""
    h, w = heatmap.shape
    c = GRID // 2
    blocks = heatmap.reshape(h // GRID, GRID, w // GRID, GRID)
    return blocks[:, c - 1:c + 1, :, c - 1:c + 1].mean(axis=(1, 3))


def gaussian_bump(shape: Tuple[int, int], u: float, v: float, sigma: float) -> Tuple[slice, slice, np.ndarray]:
    """Gaussian with unit peak at (u, v), truncated at 4 sigma."""
    h, w = shape
    r = int(np.ceil(4 * sigma))
    u0, u1 = max(int(np.floor(u)) - r, 0), min(int(np.ceil(u)) + r + 1, w)
    v0, v1 = max(int(np.floor(v)) - r, 0), min(int(np.ceil(v)) + r + 1, h)
    if u0 >= u1 or v0 >= v1:
        return slice(0, 0), slice(0, 0), np.zeros((0, 0))
    uu = np.arange(u0, u1) - u
    vv = np.arange(v0, v1) - v
    g = np.exp(-(vv[:, None] ** 2 + uu[None, :] ** 2) / (2.0 * sigma * sigma))
    return slice(v0, v1), slice(u0, u1), g


def _cov_to_channels(cov: np.ndarray) -> np.ndarray:
    return np.array([cov[i, j] for i, j in COV_INDEX])


def channels_to_cov(ch: np.ndarray) -> np.ndarray:
    xx, yy, zz, xy, xz, yz = ch
    return np.array([[xx, xy, xz], [xy, yy, yz], [xz, yz, zz]])


# --------------------------------------------------------------------------- OBB heads

def encode_obb_targets(boxes: Sequence[Obb], cam: CameraIntrinsics,
                       covariances: Optional[Sequence[Optional[np.ndarray]]] = None,
                       config: CodecConfig = CodecConfig(),
                       tensors: Optional[HeadTensors] = None) -> HeadTensors:
    """Write heatmap, vertex, depth and covariance targets for ``boxes``.

    Boxes are re-expressed in the principal frame of their covariance (an
    analytic box-surface covariance when none is given) so that the decoder,
    which only sees the covariance, reproduces the same corner order.
    """
    out = tensors if tensors is not None else HeadTensors.empty(cam.width, cam.height)
    h, w = out.inst_heatmap.shape
    if (w, h) != (cam.width, cam.height):
        raise ShapeError("head tensors do not match the camera size")
    if covariances is None:
        covariances = [None] * len(boxes)

    uc, vc = cell_centers(w, h)
    owner_heat = np.zeros(uc.shape)
    heat = out.inst_heatmap
    for box, cov in zip(boxes, covariances):
        if box.t[2] <= 0:
            warnings.warn(SkippedObject("box centroid behind the camera"), stacklevel=2)
            continue
        cu, cv = cam.project(box.t)[0]
        if not (0 <= cu <= w - 1 and 0 <= cv <= h - 1):
            warnings.warn(SkippedObject(f"centroid ({cu:.1f}, {cv:.1f}) projects outside the image"), stacklevel=2)
            continue
        cov = obb_covariance(box) if cov is None else np.asarray(cov, dtype=float)
        canon = canonicalize_obb(box, cov)
        try:
            verts = project_obb_vertices(canon, cam)
        except BehindCamera:
            warnings.warn(SkippedObject("box vertex behind the camera"), stacklevel=2)
            continue

        sv, su, g = gaussian_bump((h, w), cu, cv, config.sigma)
        np.maximum(heat[sv, su], g, out=heat[sv, su])

        # the cell heat of this object alone decides ownership of shared cells
        own = np.zeros((h, w))
        own[sv, su] = g
        own_cells = cell_heat(own)
        take = (own_cells > owner_heat) & (own_cells > config.supervise_threshold)
        if not take.any():
            continue
        owner_heat = np.where(take, own_cells, owner_heat)
        offs = (verts[None, None, :, :] - np.stack([uc, vc], axis=-1)[:, :, None, :]) / GRID
        out.vertex_offsets[take] = offs[take].reshape(-1, 16)
        out.z_centroid[take] = box.t[2]
        out.covariance[take] = _cov_to_channels(cov)
    return out


def detect_peaks(heatmap: np.ndarray, threshold: float, nms_window: int) -> List[Tuple[int, int, float]]:
    """Local maxima over a square window, as ``(u, v, score)`` sorted by score.

    A pixel survives if no pixel in its window is higher and no equal pixel in
    its window comes earlier in row-major order.
    """
    hm = np.asarray(heatmap, dtype=float)
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    size = int(nms_window)
    mx = ndimage.maximum_filter(hm, size=size, mode="constant", cval=-np.inf)
    cand = np.argwhere((hm >= mx) & (hm >= threshold))
    r = size // 2
    peaks = []
    for v, u in cand:
        val = hm[v, u]
        v0, u0 = max(v - r, 0), max(u - r, 0)
        win = hm[v0:v + r + 1, u0:u + r + 1] == val
        first = np.argwhere(win)[0]
        if first[0] + v0 == v and first[1] + u0 == u:
            peaks.append((int(u), int(v), float(val)))
    peaks.sort(key=lambda p: (-p[2], p[1], p[0]))
    return peaks


def _bilinear_cells(u: float, v: float, wg: int, hg: int):
    """Four neighbouring cells of pixel (u, v) with bilinear weights."""
    x = (u - (GRID - 1) / 2.0) / GRID
    y = (v - (GRID - 1) / 2.0) / GRID
    x = min(max(x, 0.0), wg - 1.0)
    y = min(max(y, 0.0), hg - 1.0)
    j0, i0 = int(np.floor(x)), int(np.floor(y))
    j1, i1 = min(j0 + 1, wg - 1), min(i0 + 1, hg - 1)
    fx, fy = x - j0, y - i0
    return [
        (i0, j0, (1 - fx) * (1 - fy)), (i0, j1, fx * (1 - fy)),
        (i1, j0, (1 - fx) * fy), (i1, j1, fx * fy),
    ]


def solve_box_from_vertices(verts: np.ndarray, R: np.ndarray, cam: CameraIntrinsics,
                            z_centroid: float, max_condition: float = 1e8) -> Optional[Obb]:
    """Translation and half-extents from 8 corner pixels with known rotation.

    The pinhole constraints are homogeneous in (t, S), giving the box up to
    scale; the centroid depth fixes the scale. Returns None when the system is
    ill-conditioned.
    """
    x = (verts[:, 0] - cam.cx) / cam.fx
    y = (verts[:, 1] - cam.cy) / cam.fy
    rows = []
    for k in range(8):
        A = np.hstack([np.eye(3), R * CORNER_SIGNS[k][None, :]])
        rows.append(A[0] - x[k] * A[2])
        rows.append(A[1] - y[k] * A[2])
    M = np.array(rows)
    M /= np.linalg.norm(M, axis=1, keepdims=True)
    _, sv, Vt = np.linalg.svd(M)
    if sv[4] <= 0 or sv[0] / sv[4] > max_condition:
        return None
    theta = Vt[-1]
    if abs(theta[2]) < 1e-12:
        return None
    theta = theta * (z_centroid / theta[2])
    return Obb(theta[:3], np.abs(theta[3:]), R)


def decode_obbs(tensors: HeadTensors, cam: CameraIntrinsics, threshold: float = 0.3,
                config: CodecConfig = CodecConfig()) -> List[Detection]:
    w, h = tensors.size
    if (w, h) != (cam.width, cam.height):
        raise ShapeError("head tensors do not match the camera size")
    hg, wg = tensors.z_centroid.shape
    supervised = tensors.supervised_mask(config.supervise_threshold)
    uc, vc = cell_centers(w, h)
    dets = []
    for u, v, score in detect_peaks(tensors.inst_heatmap, threshold, config.nms_window):
        cells = [(i, j, wt) for i, j, wt in _bilinear_cells(u, v, wg, hg) if supervised[i, j] and wt > 0]
        if not cells:
            ci = min(max(int(round((v - 3.5) / GRID)), 0), hg - 1)
            cj = min(max(int(round((u - 3.5) / GRID)), 0), wg - 1)
            cells = [(ci, cj, 1.0)]
        total = sum(c[2] for c in cells)
        verts = np.zeros((8, 2))
        z = 0.0
        for i, j, wt in cells:
            centre = np.array([uc[i, j], vc[i, j]])
            verts += (wt / total) * (centre + GRID * tensors.vertex_offsets[i, j].reshape(8, 2))
            z += (wt / total) * tensors.z_centroid[i, j]
        # rotation from the cell nearest to the peak
        ci, cj, _ = max(cells, key=lambda c: c[2])
        R = rotation_from_covariance(channels_to_cov(tensors.covariance[ci, cj]))
        box = solve_box_from_vertices(verts, R, cam, z, config.max_condition) if z > 0 else None
        if box is None:
            warnings.warn(DegenerateBox(f"ill-conditioned box at peak ({u}, {v})"), stacklevel=2)
            continue
        dets.append(Detection(box, score))
    dets.sort(key=lambda d: -d.confidence)
    return dets


# --------------------------------------------------------------------------- keypoints

def encode_keypoints(keypoints: KeypointSet, width: int, height: int,
                     classes: Sequence[str] = SHIRT_KEYPOINTS, sigma: float = 3.0) -> np.ndarray:
    maps = np.zeros((len(classes), height, width))
    for name in keypoints.points:
        if name not in classes:
            raise LabelError(f"unknown keypoint class {name!r}")
    for c, name in enumerate(classes):
        for kp in keypoints[name]:
            if not (0 <= kp.u <= width - 1 and 0 <= kp.v <= height - 1):
                raise ValueError(f"keypoint ({kp.u}, {kp.v}) outside the image")
            sv, su, g = gaussian_bump((height, width), kp.u, kp.v, sigma)
            np.maximum(maps[c][sv, su], g, out=maps[c][sv, su])
    return maps


def decode_keypoints(kp_heatmaps: np.ndarray, classes: Sequence[str] = SHIRT_KEYPOINTS,
                     threshold: float = 0.3, radius=10.0) -> KeypointSet:
    """Peak detection per class; ``radius`` is a number or a per-class dict."""
    out = KeypointSet()
    for c, name in enumerate(classes):
        r = radius.get(name, 10.0) if isinstance(radius, dict) else radius
        window = 2 * int(np.ceil(r)) + 1
        peaks = detect_peaks(kp_heatmaps[c], threshold, window)
        out.points[name] = [Keypoint(float(u), float(v), s) for u, v, s in peaks]
    return out


# --------------------------------------------------------------------------- disparity head

def fuse_full_res_disparity(low: DisparityMap, left: np.ndarray, radius: int = 2,
                            sigma_spatial: float = 1.0, sigma_range: float = 0.08) -> DisparityMap:
    """Joint bilateral upsampling of a low-resolution disparity map.

    ``sigma_spatial`` is in low-resolution pixels, ``sigma_range`` in intensity
    units of the [0, 1]-scaled left image. A full-resolution pixel is invalid
    when its nearest low-resolution sample is invalid.
    """
    gray = to_gray(left)
    if gray.max() > 1.0:
        gray = gray / 255.0
    H, W = gray.shape
    h, w = low.shape
    if H % h or W % w or H // h != W // w:
        raise ShapeError("low-resolution map is not an integer downsampling of the image")
    f = H // h
    guide = block_mean(gray, f)
    D = low.filled(0.0)
    V = low.valid.astype(float)

    ly = (np.arange(H) + 0.5) / f - 0.5
    lx = (np.arange(W) + 0.5) / f - 0.5
    iy0 = np.floor(ly).astype(int)
    ix0 = np.floor(lx).astype(int)
    num = np.zeros((H, W))
    den = np.zeros((H, W))
    for dy in range(-radius + 1, radius + 1):
        qi = iy0 + dy
        oky = (qi >= 0) & (qi < h)
        qi_c = np.clip(qi, 0, h - 1)
        wy = np.exp(-0.5 * ((ly - qi) / sigma_spatial) ** 2) * oky
        for dx in range(-radius + 1, radius + 1):
            qj = ix0 + dx
            okx = (qj >= 0) & (qj < w)
            qj_c = np.clip(qj, 0, w - 1)
            wx = np.exp(-0.5 * ((lx - qj) / sigma_spatial) ** 2) * okx
            g = guide[qi_c[:, None], qj_c[None, :]]
            wr = np.exp(-0.5 * ((gray - g) / sigma_range) ** 2)
            wt = wy[:, None] * wx[None, :] * wr * V[qi_c[:, None], qj_c[None, :]]
            num += wt * D[qi_c[:, None], qj_c[None, :]]
            den += wt
    near_i = np.clip(np.round(ly).astype(int), 0, h - 1)
    near_j = np.clip(np.round(lx).astype(int), 0, w - 1)
    valid = low.valid[near_i[:, None], near_j[None, :]] & (den > 1e-12)
    out = np.zeros((H, W))
    np.divide(num, den, out=out, where=valid)
    return DisparityMap(out, valid)


# --------------------------------------------------------------------------- segmentation

def encode_segmentation(kinds: np.ndarray, table: Optional[Dict[int, int]] = None) -> np.ndarray:
    """Map per-pixel scene kinds to {background, surface, object} class ids."""
    table = KIND_TO_CLASS if table is None else table
    kinds = np.asarray(kinds)
    unknown = np.setdiff1d(np.unique(kinds), np.array(list(table), dtype=kinds.dtype))
    if unknown.size:
        raise LabelError(f"unknown label ids {unknown.tolist()}")
    lut = np.zeros(max(table) + 1, dtype=np.uint8)
    for k, c in table.items():
        lut[k] = c
    return lut[kinds]


def one_hot_logits(seg: np.ndarray, num_classes: int = len(SEG_CLASSES)) -> np.ndarray:
    """Logits with infinite margin for a class map (0 on target, -inf elsewhere)."""
    logits = np.full((num_classes,) + seg.shape, -np.inf)
    for c in range(num_classes):
        logits[c][seg == c] = 0.0
    return logits


def cross_entropy(logits: np.ndarray, target: np.ndarray) -> float:
    """Pixel-mean cross entropy of (C, H, W) logits against a class map."""
    target = np.asarray(target)
    if target.min() < 0 or target.max() >= logits.shape[0]:
        raise LabelError("target class out of range")
    lse = logsumexp(logits, axis=0)
    picked = np.take_along_axis(logits, target[None].astype(int), axis=0)[0]
    return float(np.mean(lse - picked))


def heatmap_kl(pred: np.ndarray, target: np.ndarray, eps: float = 1e-7) -> float:
    """Pixelwise binary cross entropy minus the target entropy (zero iff equal)."""
    p = np.clip(pred, eps, 1 - eps)
    q = np.clip(target, eps, 1 - eps)
    return float(np.mean(q * np.log(q / p) + (1 - q) * np.log((1 - q) / (1 - p))))


@dataclass(frozen=True)
class LossWeights:
    seg: float = 1.0
    kp: float = 1.0
    disp: float = 1.0
    cov: float = 1.0
    inst: float = 1.0
    vrtx: float = 1.0
    cent: float = 1.0


def loss_terms(pred: HeadTensors, target: HeadTensors, delta: float = 1.0,
               threshold: float = 0.3) -> Dict[str, float]:
    mask = target.supervised_mask(threshold)

    def masked_l1(a, b):
        if not mask.any():
            return 0.0
        d = np.abs(a - b)
        return float(d[mask].mean())

    logits = pred.seg_logits if pred.seg_logits is not None else one_hot_logits(pred.seg)
    terms = {
        "seg": cross_entropy(logits, target.seg),
        "kp": heatmap_kl(pred.kp_heatmaps, target.kp_heatmaps) if target.kp_heatmaps.size else 0.0,
        "inst": float(np.abs(pred.inst_heatmap - target.inst_heatmap).mean()),
        "vrtx": masked_l1(pred.vertex_offsets, target.vertex_offsets),
        "cent": masked_l1(pred.z_centroid, target.z_centroid),
        "cov": masked_l1(pred.covariance, target.covariance),
    }
    tgt = target.disparity_full
    if tgt.valid.any():
        m = tgt.valid
        terms["disp"] = float(huber(pred.disparity_full.data[m] - tgt.data[m], delta).mean())
        if pred.disparity_low is not None:
            f = tgt.shape[0] // pred.disparity_low.shape[0]
            small = downsample_disparity(tgt, f)
            ms = small.valid
            terms["disp_small"] = float(huber(pred.disparity_low.data[ms] - small.data[ms], delta).mean()) if ms.any() else 0.0
        else:
            terms["disp_small"] = 0.0
    else:
        terms["disp"] = terms["disp_small"] = 0.0
    return terms


def total_loss(pred: HeadTensors, target: HeadTensors, weights: LossWeights = LossWeights(),
               delta: float = 1.0) -> float:
    t = loss_terms(pred, target, delta)
    return (weights.seg * t["seg"] + weights.kp * t["kp"] + weights.disp * t["disp"]
            + weights.disp * t["disp_small"] + weights.cov * t["cov"] + weights.inst * t["inst"]
            + weights.vrtx * t["vrtx"] + weights.cent * t["cent"])


# --------------------------------------------------------------------------- serialization

_FLOAT_CHANNELS = ("z_centroid",)


def save_head_tensors(directory, tensors: HeadTensors) -> None:
    """Write every channel to ``directory`` with a ``manifest.json`` index."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    manifest = {"kp_classes": list(tensors.kp_classes), "channels": {}}

    def add(name, fname, dtype, scale):
        manifest["channels"][name] = {"file": fname, "dtype": dtype, "scale": scale}

    io.write_png8(d / "seg.png", tensors.seg)
    add("seg", "seg.png", "uint8", 1.0)
    io.write_png16(d / "inst_heatmap.png", np.round(np.clip(tensors.inst_heatmap, 0, 1) * 65535))
    add("inst_heatmap", "inst_heatmap.png", "uint16", 1.0 / 65535)
    for k in range(16):
        io.write_pfm(d / f"vertex_{k:02d}.pfm", tensors.vertex_offsets[..., k])
        add(f"vertex_offsets[{k}]", f"vertex_{k:02d}.pfm", "float32", 1.0)
    io.write_pfm(d / "z_centroid.pfm", tensors.z_centroid)
    add("z_centroid", "z_centroid.pfm", "float32", 1.0)
    for k in range(6):
        io.write_pfm(d / f"cov_{k}.pfm", tensors.covariance[..., k])
        add(f"covariance[{k}]", f"cov_{k}.pfm", "float32", 1.0)
    for c, name in enumerate(tensors.kp_classes):
        io.write_png16(d / f"kp_{name}.png", np.round(np.clip(tensors.kp_heatmaps[c], 0, 1) * 65535))
        add(f"kp_heatmaps[{name}]", f"kp_{name}.png", "uint16", 1.0 / 65535)
    io.write_disparity_pfm(d / "disparity_full.pfm", tensors.disparity_full)
    add("disparity_full", "disparity_full.pfm", "float32", 1.0)
    io.dump_json(d / "manifest.json", manifest)


def load_head_tensors(directory) -> HeadTensors:
    d = Path(directory)
    manifest = io.load_json(d / "manifest.json")
    ch = manifest["channels"]
    classes = tuple(manifest["kp_classes"])

    def png16(name):
        info = ch[name]
        return io.read_png16(d / info["file"]).astype(float) * info["scale"]

    seg = np.array(io.Image.open(d / ch["seg"]["file"]), dtype=np.uint8)
    verts = np.stack([io.read_pfm(d / ch[f"vertex_offsets[{k}]"]["file"]) for k in range(16)], axis=-1)
    cov = np.stack([io.read_pfm(d / ch[f"covariance[{k}]"]["file"]) for k in range(6)], axis=-1)
    kp = np.stack([png16(f"kp_heatmaps[{n}]") for n in classes]) if classes else np.zeros((0,) + seg.shape)
    return HeadTensors(
        seg=seg,
        inst_heatmap=png16("inst_heatmap"),
        vertex_offsets=verts,
        z_centroid=io.read_pfm(d / ch["z_centroid"]["file"]),
        covariance=cov,
        kp_heatmaps=kp,
        disparity_full=io.read_disparity_pfm(d / ch["disparity_full"]["file"]),
        kp_classes=classes,
    )


def detections_to_json(dets: Sequence[Detection]) -> list:
    return [d.to_dict() for d in dets]


def detections_from_json(items: list) -> List[Detection]:
    return [Detection.from_dict(d) for d in items]
