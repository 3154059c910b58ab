"""Triangle meshes: parameterized primitives, flat t-shirt sheets and OBJ files."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np


@dataclass
class Mesh:
    vertices: np.ndarray  # (N, 3)
    faces: np.ndarray  # (M, 3) int
    keypoints: Dict[str, List[Tuple[float, float, float]]] = field(default_factory=dict)

    def triangles(self) -> np.ndarray:
        return self.vertices[self.faces]

    def face_normals(self) -> np.ndarray:
        tri = self.triangles()
        n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        norm = np.linalg.norm(n, axis=1, keepdims=True)
        return np.divide(n, norm, out=np.zeros_like(n), where=norm > 0)

    def face_areas(self) -> np.ndarray:
        tri = self.triangles()
        return 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)

    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def sample_surface(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Points uniformly distributed over the surface area."""
        areas = self.face_areas()
        tri = self.triangles()
        idx = rng.choice(len(tri), size=n, p=areas / areas.sum())
        r1 = np.sqrt(rng.random(n))
        r2 = rng.random(n)
        a, b, c = tri[idx, 0], tri[idx, 1], tri[idx, 2]
        return (1 - r1)[:, None] * a + (r1 * (1 - r2))[:, None] * b + (r1 * r2)[:, None] * c

    def transformed(self, R: np.ndarray, t: np.ndarray) -> "Mesh":
        kps = {k: [tuple(R @ np.asarray(p) + t) for p in v] for k, v in self.keypoints.items()}
        return Mesh(self.vertices @ R.T + t, self.faces, kps)


def box(half_extents) -> Mesh:
    a, b, c = half_extents
    v = np.array([[sx * a, sy * b, sz * c] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], float)
    # vertex index = 4*ix + 2*iy + iz with outward-facing winding
    f = np.array([
        [0, 1, 3], [0, 3, 2],  # -x
        [4, 6, 7], [4, 7, 5],  # +x
        [0, 4, 5], [0, 5, 1],  # -y
        [2, 3, 7], [2, 7, 6],  # +y
        [0, 2, 6], [0, 6, 4],  # -z
        [1, 5, 7], [1, 7, 3],  # +z
    ])
    return Mesh(v, f)


def quad(width: float, height: float) -> Mesh:
    """Square sheet in the z = 0 plane facing +z."""
    w, h = width / 2.0, height / 2.0
    v = np.array([[-w, -h, 0], [w, -h, 0], [w, h, 0], [-w, h, 0]], float)
    return Mesh(v, np.array([[0, 1, 2], [0, 2, 3]]))


def cylinder(radius: float, half_height: float, segments: int = 24) -> Mesh:
    ang = 2 * np.pi * np.arange(segments) / segments
    ring = np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    bottom = np.hstack([ring, np.full((segments, 1), -half_height)])
    top = np.hstack([ring, np.full((segments, 1), half_height)])
    v = np.vstack([bottom, top, [[0, 0, -half_height], [0, 0, half_height]]])
    cb, ct = 2 * segments, 2 * segments + 1
    faces = []
    for i in range(segments):
        j = (i + 1) % segments
        faces += [[i, j, segments + j], [i, segments + j, segments + i]]
        faces += [[cb, j, i], [ct, segments + i, segments + j]]
    return Mesh(v, np.array(faces))


def superellipsoid(radii, e1: float = 1.0, e2: float = 1.0, rings: int = 12, segments: int = 24) -> Mesh:
    """Superquadric surface; e1 = e2 = 1 gives an ellipsoid."""
    def spow(x, p):
        return np.sign(x) * np.abs(x) ** p

    a, b, c = radii
    eta = np.linspace(-np.pi / 2, np.pi / 2, rings + 1)[1:-1]
    omega = 2 * np.pi * np.arange(segments) / segments
    E, O = np.meshgrid(eta, omega, indexing="ij")
    x = a * spow(np.cos(E), e1) * spow(np.cos(O), e2)
    y = b * spow(np.cos(E), e1) * spow(np.sin(O), e2)
    z = c * spow(np.sin(E), e1)
    v = np.stack([x, y, z], axis=-1).reshape(-1, 3)
    v = np.vstack([v, [[0, 0, -c], [0, 0, c]]])
    south, north = len(v) - 2, len(v) - 1
    n_r = rings - 1
    faces = []
    for r in range(n_r - 1):
        for s in range(segments):
            s2 = (s + 1) % segments
            p, q = r * segments + s, r * segments + s2
            p2, q2 = (r + 1) * segments + s, (r + 1) * segments + s2
            faces += [[p, q, q2], [p, q2, p2]]
    for s in range(segments):
        s2 = (s + 1) % segments
        faces.append([south, s2, s])
        top = (n_r - 1) * segments
        faces.append([north, top + s, top + s2])
    return Mesh(v, np.array(faces))


def sphere(radius: float, rings: int = 12, segments: int = 24) -> Mesh:
    return superellipsoid((radius, radius, radius), 1.0, 1.0, rings, segments)


# Fold states of the flat t-shirt model. In shirt coordinates x runs across
# the chest and y from the hem (y = 0) up to the collar.
FOLD_STATES = ("flat", "sleeves_joined", "bottoms_joined", "sleeves_in")


def _quad_faces(quads):
    verts, faces = [], []
    for q in quads:
        base = len(verts)
        verts.extend(q)
        faces += [[base, base + 1, base + 2], [base, base + 2, base + 3]]
    return np.array(verts, float), np.array(faces)


def shirt(width: float, length: float, sleeve: float, state: str = "flat", lift: float = 0.002) -> Mesh:
    """Flat keypoint-annotated t-shirt sheet in one of the four fold states.

    The sheet lies in the z = ``lift`` plane; keypoints carry the same height.
    """
    if state not in FOLD_STATES:
        raise ValueError(f"unknown fold state {state!r}")
    w = width / 2.0
    L = length
    arm = 0.3 * L  # sleeve opening height
    sy = L - 0.5 * arm  # sleeve keypoint height
    tiny = 0.01 * width

    body = [(-w, 0), (w, 0), (w, L), (-w, L)]
    left_sleeve = [(-w - sleeve, L - arm), (-w, L - arm), (-w, L), (-w - sleeve, L - 0.2 * arm)]
    right_sleeve = [(w, L - arm), (w + sleeve, L - arm), (w + sleeve, L - 0.2 * arm), (w, L)]
    half_body = [(0, 0), (w, 0), (w, L), (0, L)]
    neck = (0.0, L)
    if state == "flat":
        quads = [body, left_sleeve, right_sleeve]
        kps = {"sleeve": [(-w - sleeve, sy), (w + sleeve, sy)], "neck": [neck],
               "bottom_corner": [(-w, 0.0), (w, 0.0)]}
    elif state == "sleeves_joined":
        quads = [body, right_sleeve]
        kps = {"sleeve": [(w + sleeve - tiny, sy), (w + sleeve, sy)], "neck": [neck],
               "bottom_corner": [(-w, 0.0), (w, 0.0)]}
    elif state == "bottoms_joined":
        quads = [half_body, right_sleeve]
        kps = {"sleeve": [(w + sleeve - tiny, sy), (w + sleeve, sy)], "neck": [neck],
               "bottom_corner": [(w - tiny, 0.0), (w, 0.0)]}
    else:
        quads = [half_body]
        kps = {"sleeve": [(tiny, sy), (2 * tiny, sy)], "neck": [neck],
               "bottom_corner": [(w - tiny, 0.0), (w, 0.0)]}
    v2, faces = _quad_faces(quads)
    # centre the sheet on its footprint
    off = (v2.min(axis=0) + v2.max(axis=0)) / 2.0
    v = np.hstack([v2 - off, np.full((len(v2), 1), lift)])
    keypoints = {k: [(x - off[0], y - off[1], lift) for x, y in pts] for k, pts in kps.items()}
    return Mesh(v, faces, keypoints)


def load_obj(path, target_size: float = 0.15) -> Mesh:
    """Read vertices and (triangulated) faces from an OBJ file, centred and scaled."""
    verts, faces = [], []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            idx = [int(p.split("/")[0]) for p in parts[1:]]
            idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
            for k in range(1, len(idx) - 1):
                faces.append([idx[0], idx[k], idx[k + 1]])
    v = np.array(verts, float)
    lo, hi = v.min(axis=0), v.max(axis=0)
    v = (v - (lo + hi) / 2.0) * (target_size / max((hi - lo).max(), 1e-12))
    return Mesh(v, np.array(faces, dtype=int))


def build_mesh(shape: dict) -> Mesh:
    """Construct a mesh from a serializable description."""
    kind = shape["type"]
    if kind == "box":
        return box(shape["half_extents"])
    if kind == "cylinder":
        return cylinder(shape["radius"], shape["half_height"], shape.get("segments", 24))
    if kind == "sphere":
        return sphere(shape["radius"], shape.get("rings", 12), shape.get("segments", 24))
    if kind == "superellipsoid":
        return superellipsoid(shape["radii"], shape["e1"], shape["e2"], shape.get("rings", 12), shape.get("segments", 24))
    if kind == "quad":
        return quad(shape["width"], shape["height"])
    if kind == "shirt":
        return shirt(shape["width"], shape["length"], shape["sleeve"], shape["state"])
    if kind == "obj":
        return load_obj(shape["path"], shape.get("size", 0.15))
    raise ValueError(f"unknown mesh type {kind!r}")


# --------------------------------------------------------------------------- intersection

def _segments_hit_triangles(p0: np.ndarray, p1: np.ndarray, tri: np.ndarray, eps: float = 1e-12) -> bool:
    """True if any segment p0[i]->p1[i] crosses any triangle (Moller-Trumbore)."""
    if len(p0) == 0 or len(tri) == 0:
        return False
    d = (p1 - p0)[:, None, :]
    v0, e1, e2 = tri[None, :, 0], (tri[:, 1] - tri[:, 0])[None], (tri[:, 2] - tri[:, 0])[None]
    h = np.cross(d, e2)
    a = np.einsum("ijk,ijk->ij", e1, h)
    ok = np.abs(a) > eps
    f = np.divide(1.0, a, out=np.zeros_like(a), where=ok)
    s = p0[:, None, :] - v0
    u = f * np.einsum("ijk,ijk->ij", s, h)
    q = np.cross(s, e1)
    v = f * np.einsum("ijk,ijk->ij", d, q)
    t = f * np.einsum("ijk,ijk->ij", e2, q)
    hit = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t >= 0) & (t <= 1)
    return bool(hit.any())


def _point_inside(points: np.ndarray, tri: np.ndarray) -> np.ndarray:
    """Ray-parity containment test against a closed triangle soup."""
    direction = np.array([0.5773, 0.5774, 0.5775])
    out = np.zeros(len(points), dtype=bool)
    v0, e1, e2 = tri[:, 0], tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]
    h = np.cross(direction, e2)
    a = np.einsum("ij,ij->i", e1, h)
    ok = np.abs(a) > 1e-12
    f = np.divide(1.0, a, out=np.zeros_like(a), where=ok)
    for k, p in enumerate(points):
        s = p - v0
        u = f * np.einsum("ij,ij->i", s, h)
        q = np.cross(s, e1)
        v = f * (q @ direction)
        t = f * np.einsum("ij,ij->i", e2, q)
        out[k] = np.count_nonzero(ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 0)) % 2 == 1
    return out


def meshes_intersect(a: Mesh, b: Mesh, margin: float = 0.0) -> bool:
    """Penetration test for two world-space meshes.

    AABB pre-check (expanded by ``margin``), then edge/triangle crossings in both
    directions and a containment check for fully nested meshes.
    """
    lo_a, hi_a = a.bounds()
    lo_b, hi_b = b.bounds()
    if np.any(hi_a + margin < lo_b) or np.any(hi_b + margin < lo_a):
        return False
    lo = np.maximum(lo_a, lo_b) - margin
    hi = np.minimum(hi_a, hi_b) + margin

    def clip(m: Mesh):
        tri = m.triangles()
        keep = np.all(tri.max(axis=1) >= lo, axis=1) & np.all(tri.min(axis=1) <= hi, axis=1)
        return tri[keep]

    ta, tb = clip(a), clip(b)
    for src, dst in ((ta, tb), (tb, ta)):
        if len(src) and len(dst):
            p0 = np.concatenate([src[:, 0], src[:, 1], src[:, 2]])
            p1 = np.concatenate([src[:, 1], src[:, 2], src[:, 0]])
            if _segments_hit_triangles(p0, p1, dst):
                return True
    if _point_inside(a.vertices[:1], b.triangles()).any() or _point_inside(b.vertices[:1], a.triangles()).any():
        return True
    return False
