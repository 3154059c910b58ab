"""Z-buffer triangle rasterizer and stereo ground-truth rendering."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..codec import KIND_NONE, KIND_TABLE_TOP, KIND_TO_CLASS, SHIRT_KEYPOINTS
from ..geometry import CameraIntrinsics, Obb, StereoRig, rotation_from_covariance
from ..stereo import DisparityMap
from . import textures
from .scene import CameraPose, SceneGraph

NEAR = 0.01
_BUCKETS = (2, 4, 8, 16, 32, 64)
_MAX_FRAGMENTS = 1 << 21


@dataclass
class RasterResult:
    depth: np.ndarray  # camera-frame Z, inf where empty
    face: np.ndarray  # index into the input triangle array, -1 where empty


@dataclass
class SceneSample:
    left: np.ndarray
    right: np.ndarray
    gt_disparity: DisparityMap
    depth: np.ndarray
    seg: np.ndarray
    kinds: np.ndarray
    instance: np.ndarray  # object index per pixel, -1 elsewhere
    non_occluded: np.ndarray
    boxes: List[Obb]
    covariances: List[np.ndarray]
    keypoints: Dict[str, List[Tuple[float, float]]]
    rig: StereoRig
    camera: CameraPose
    noisy_depth: Optional[np.ndarray] = None
    seed: Optional[int] = None
    labels: List[str] = field(default_factory=list)
    scene: Optional[SceneGraph] = None


def _clip_near(tris: np.ndarray, near: float) -> Tuple[np.ndarray, np.ndarray]:
    """Clip camera-frame triangles (N, 3, 3) against z = near."""
    inside = tris[:, :, 2] >= near
    n_in = inside.sum(axis=1)
    full = np.flatnonzero(n_in == 3)
    out_tris = [tris[full]]
    out_src = [full]
    for k in np.flatnonzero((n_in > 0) & (n_in < 3)):
        poly = []
        tri = tris[k]
        for i in range(3):
            a, b = tri[i], tri[(i + 1) % 3]
            ia, ib = a[2] >= near, b[2] >= near
            if ia:
                poly.append(a)
            if ia != ib:
                s = (near - a[2]) / (b[2] - a[2])
                poly.append(a + s * (b - a))
        for i in range(1, len(poly) - 1):
            out_tris.append(np.array([[poly[0], poly[i], poly[i + 1]]]))
            out_src.append(np.array([k]))
    return np.concatenate(out_tris, axis=0), np.concatenate(out_src)


def _fragments(scr: np.ndarray, z: np.ndarray, u0, v0, du, dv):
    """Pixel coverage for triangles given per-triangle pixel offsets.

    ``du``/``dv`` broadcast against (N, K); returns (valid, u, v, depth).
    """
    u = u0[:, None] + du
    v = v0[:, None] + dv
    x0, y0 = scr[:, 0, 0:1], scr[:, 0, 1:2]
    x1, y1 = scr[:, 1, 0:1], scr[:, 1, 1:2]
    x2, y2 = scr[:, 2, 0:1], scr[:, 2, 1:2]
    area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
    l1 = ((u - x0) * (y2 - y0) - (x2 - x0) * (v - y0)) / area
    l2 = ((x1 - x0) * (v - y0) - (u - x0) * (y1 - y0)) / area
    l0 = 1.0 - l1 - l2
    eps = -1e-9
    ok = (l0 >= eps) & (l1 >= eps) & (l2 >= eps)
    invz = l0 / z[:, 0:1] + l1 / z[:, 1:2] + l2 / z[:, 2:3]
    return ok, u, v, 1.0 / np.where(ok, invz, 1.0)


def rasterize(tris_cam: np.ndarray, cam: CameraIntrinsics, near: float = NEAR) -> RasterResult:
    """Nearest-surface rasterization of camera-frame triangles.

    Pixels are sampled at integer coordinates; depth is interpolated
    perspective-correctly. Ties resolve to the lower triangle index.
    """
    W, H = cam.width, cam.height
    depth = np.full(H * W, np.inf)
    face = np.full(H * W, -1, dtype=np.int64)
    if len(tris_cam) == 0:
        return RasterResult(depth.reshape(H, W), face.reshape(H, W))
    tris, src = _clip_near(np.asarray(tris_cam, float), near)
    if len(tris) == 0:
        return RasterResult(depth.reshape(H, W), face.reshape(H, W))
    z = tris[:, :, 2]
    scr = np.stack([cam.fx * tris[:, :, 0] / z + cam.cx, cam.fy * tris[:, :, 1] / z + cam.cy], axis=-1)
    lo = np.ceil(scr.min(axis=1) - 1e-9)
    hi = np.floor(scr.max(axis=1) + 1e-9)
    lo = np.maximum(lo, 0)
    hi = np.minimum(hi, [W - 1, H - 1])
    area = np.abs((scr[:, 1, 0] - scr[:, 0, 0]) * (scr[:, 2, 1] - scr[:, 0, 1])
                  - (scr[:, 2, 0] - scr[:, 0, 0]) * (scr[:, 1, 1] - scr[:, 0, 1]))
    keep = np.all(hi >= lo, axis=1) & (area > 1e-12)
    tris, src, scr, z, lo, hi = tris[keep], src[keep], scr[keep], z[keep], lo[keep].astype(np.int64), hi[keep].astype(np.int64)
    extent = (hi - lo + 1).max(axis=1)

    pix_all, z_all, f_all = [], [], []

    def collect(ok, u, v, zz, ids):
        idx = np.broadcast_to(ids[:, None], ok.shape)[ok]
        pix_all.append((v[ok].astype(np.int64) * W + u[ok].astype(np.int64)))
        z_all.append(zz[ok])
        f_all.append(idx)

    assigned = np.zeros(len(tris), dtype=bool)
    for s in _BUCKETS:
        sel = np.flatnonzero(~assigned & (extent <= s))
        assigned[sel] = True
        if len(sel) == 0:
            continue
        dv, du = np.divmod(np.arange(s * s), s)
        step = max(1, _MAX_FRAGMENTS // (s * s))
        for c in range(0, len(sel), step):
            b = sel[c:c + step]
            ok, u, v, zz = _fragments(scr[b], z[b], lo[b, 0].astype(float), lo[b, 1].astype(float),
                                      du[None, :].astype(float), dv[None, :].astype(float))
            ok &= (u <= hi[b, 0:1]) & (v <= hi[b, 1:2])
            collect(ok, u, v, zz, src[b])
    for k in np.flatnonzero(~assigned):
        vv, uu = np.mgrid[lo[k, 1]:hi[k, 1] + 1, lo[k, 0]:hi[k, 0] + 1]
        ok, u, v, zz = _fragments(scr[k:k + 1], z[k:k + 1], np.zeros(1), np.zeros(1),
                                  uu.reshape(1, -1).astype(float), vv.reshape(1, -1).astype(float))
        collect(ok, u, v, zz, src[k:k + 1])

    pix = np.concatenate(pix_all)
    zz = np.concatenate(z_all)
    ff = np.concatenate(f_all)
    if len(pix):
        order = np.lexsort((ff, zz, pix))
        pix, zz, ff = pix[order], zz[order], ff[order]
        first = np.ones(len(pix), dtype=bool)
        first[1:] = pix[1:] != pix[:-1]
        depth[pix[first]] = zz[first]
        face[pix[first]] = ff[first]
    return RasterResult(depth.reshape(H, W), face.reshape(H, W))


@dataclass
class _Soup:
    """All scene triangles in world coordinates with per-face attributes."""

    tris: np.ndarray
    normals: np.ndarray
    node: np.ndarray
    kind: np.ndarray


def _scene_soup(scene: SceneGraph) -> Tuple[_Soup, list]:
    nodes = scene.nodes()
    tris, normals, node_ids, kinds = [], [], [], []
    for i, n in enumerate(nodes):
        m = n.world_mesh()
        t = m.triangles()
        fn = m.face_normals()
        k = np.full(len(t), n.kind)
        if n is scene.table:
            k[fn[:, 2] > 0.9] = KIND_TABLE_TOP
        tris.append(t)
        normals.append(fn)
        node_ids.append(np.full(len(t), i))
        kinds.append(k)
    return _Soup(np.concatenate(tris), np.concatenate(normals), np.concatenate(node_ids), np.concatenate(kinds)), nodes


def _shade(scene: SceneGraph, soup: _Soup, nodes, r: RasterResult, pose: CameraPose,
           cam: CameraIntrinsics) -> np.ndarray:
    H, W = r.depth.shape
    img = np.zeros((H, W, 3))
    hit = r.face >= 0
    if not hit.any():
        return img
    vs, us = np.nonzero(hit)
    Z = r.depth[hit]
    pc = np.stack([(us - cam.cx) / cam.fx * Z, (vs - cam.cy) / cam.fy * Z, Z], axis=1)
    pw = (pc - pose.t) @ pose.R  # R^T (x_c - t)
    f = r.face[hit]
    n = soup.normals[f]
    eye = pose.position
    flip = np.einsum("ij,ij->i", n, eye - pw) < 0
    n[flip] *= -1
    light = np.full((len(f), 3), scene.ambient)
    for l in scene.lights:
        lam = np.clip(n @ (-l.direction), 0.0, None)
        light += l.intensity * lam[:, None] * l.color
    albedo = np.zeros((len(f), 3))
    nid = soup.node[f]
    for i in np.unique(nid):
        sel = nid == i
        node = nodes[i]
        local = (pw[sel] - node.t) @ node.R
        albedo[sel] = textures.evaluate(node.texture, local)
    img[hit] = np.clip(albedo * light, 0.0, 1.0)
    return img


def render_view(scene: SceneGraph, pose: CameraPose, cam: CameraIntrinsics, soup=None):
    """Render one view; returns (rgb, RasterResult, soup, nodes)."""
    if soup is None:
        soup, nodes = _scene_soup(scene)
    else:
        soup, nodes = soup
    tc = soup.tris @ pose.R.T + pose.t
    r = rasterize(tc, cam)
    return _shade(scene, soup, nodes, r, pose, cam), r, soup, nodes


def right_pose(left: CameraPose, baseline: float) -> CameraPose:
    """The right camera sits ``baseline`` along the left camera's +x axis."""
    return CameraPose(left.R, left.t - np.array([baseline, 0.0, 0.0]))


def object_label(node, pose: CameraPose, rng: np.random.Generator, n_samples: int = 2048):
    """Camera-frame surface covariance, label box and the samples used."""
    mesh = node.local_mesh()
    pts_local = mesh.sample_surface(n_samples, rng)
    R_co = pose.R @ node.R
    t_co = pose.R @ node.t + pose.t
    pts = pts_local @ R_co.T + t_co
    verts = mesh.vertices @ R_co.T + t_co
    cov = np.cov(pts.T, bias=True)
    R = rotation_from_covariance(cov)
    local = np.concatenate([pts, verts]) @ R
    lo, hi = local.min(axis=0), local.max(axis=0)
    box = Obb(R @ ((lo + hi) / 2.0), (hi - lo) / 2.0, R)
    return cov, box, pts


def render_stereo(scene: SceneGraph, rig: StereoRig, n_cov_samples: int = 2048) -> SceneSample:
    cam = rig.intrinsics
    soup_nodes = _scene_soup(scene)
    left, rl, soup, nodes = render_view(scene, scene.camera, cam, soup_nodes)
    right, rr, _, _ = render_view(scene, right_pose(scene.camera, rig.baseline), cam, soup_nodes)

    H, W = cam.height, cam.width
    valid = np.isfinite(rl.depth)
    depth = np.where(valid, rl.depth, 0.0)
    disp = np.zeros((H, W))
    disp[valid] = cam.fx * rig.baseline / rl.depth[valid]

    kinds = np.full((H, W), KIND_NONE, dtype=np.int64)
    kinds[valid] = soup.kind[rl.face[valid]]
    lut = np.array([KIND_TO_CLASS[k] for k in range(len(KIND_TO_CLASS))], dtype=np.int64)
    seg = lut[kinds]

    # instance ids for objects
    obj_index = {id(n): k for k, n in enumerate(scene.objects)}
    node_to_obj = np.array([obj_index.get(id(n), -1) for n in nodes])
    instance = np.full((H, W), -1, dtype=np.int64)
    instance[valid] = node_to_obj[soup.node[rl.face[valid]]]

    # visible in the right view at the same depth
    vs, us = np.nonzero(valid)
    ur = np.round(us - disp[valid]).astype(np.int64)
    inside = ur >= 0
    zr = np.full(len(us), -np.inf)
    zr[inside] = rr.depth[vs[inside], ur[inside]]
    z = rl.depth[valid]
    non_occ = np.zeros((H, W), dtype=bool)
    non_occ[valid] = inside & (np.abs(zr - z) <= 0.01 * z + 1e-4)

    boxes, covs, labels = [], [], []
    keypoints: Dict[str, List[Tuple[float, float]]] = {c: [] for c in SHIRT_KEYPOINTS}
    seed = scene.rng_seed if scene.rng_seed is not None else 0
    for k, node in enumerate(scene.objects):
        rng = np.random.default_rng([seed, 7, k])
        cov, box, _ = object_label(node, scene.camera, rng, n_cov_samples)
        boxes.append(box)
        covs.append(cov)
        labels.append(node.label)
        for cls, pts in node.local_mesh().keypoints.items():
            for p in pts:
                pc = scene.camera.R @ (node.R @ np.asarray(p) + node.t) + scene.camera.t
                if pc[2] <= NEAR:
                    continue
                u, v = cam.project(pc[None])[0]
                if 0 <= u <= W - 1 and 0 <= v <= H - 1:
                    keypoints.setdefault(cls, []).append((float(u), float(v)))

    return SceneSample(
        left=left, right=right, gt_disparity=DisparityMap(disp, valid), depth=depth, seg=seg, kinds=kinds,
        instance=instance, non_occluded=non_occ, boxes=boxes, covariances=covs, keypoints=keypoints,
        rig=rig, camera=scene.camera, seed=scene.rng_seed, labels=labels, scene=scene,
    )
