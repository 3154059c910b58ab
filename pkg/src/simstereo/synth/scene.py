"""Domain-randomized tabletop scene graphs.

World frame: z up, floor at z = 0, table top centred on the z axis.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from ..codec import KIND_DISTRACTOR, KIND_OBJECT, KIND_ROOM, KIND_TABLE_SIDE
from ..errors import PlacementError
from ..geometry import look_at
from . import meshes, textures

PRIMITIVES = ("box", "cylinder", "sphere", "superellipsoid")
SHEET_LIFT = 0.0008  # keeps flat garments off the table top in the depth buffer


@dataclass(frozen=True)
class SceneConfig:
    scene_type: str = "objects"  # or "shirts"
    min_objects: int = 1
    max_objects: int = 8
    min_distractors: int = 0
    max_distractors: int = 5
    min_lights: int = 1
    max_lights: int = 4
    radius_min: float = 0.5
    radius_max: float = 2.0
    target_jitter: float = 0.05
    roll_jitter_deg: float = 5.0
    table_height: Tuple[float, float] = (0.6, 0.8)
    table_size: Tuple[float, float] = (0.8, 1.6)
    room_half_size: Tuple[float, float] = (3.0, 5.0)
    object_size: Tuple[float, float] = (0.02, 0.12)
    texture_kinds: Tuple[str, ...] = textures.TEXTURE_KINDS
    texture_weights: Tuple[float, ...] = (0.1, 0.1, 0.7, 0.1)
    room_texture_scale: float = 3.0
    # periodic patterns on large surfaces make matching ambiguous
    room_texture_kinds: Tuple[str, ...] = ("solid", "perlin", "gradient")
    mesh_library: Tuple[str, ...] = PRIMITIVES
    placement_margin: float = 0.005
    max_attempts: int = 1000

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "SceneConfig":
        kw = {}
        for k, v in d.items():
            kw[k] = tuple(v) if isinstance(v, list) else v
        return cls(**kw)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


@dataclass
class Node:
    name: str
    mesh: dict
    R: np.ndarray
    t: np.ndarray
    kind: int
    texture: dict
    label: str = ""

    def world_mesh(self) -> meshes.Mesh:
        return _cached_mesh(json.dumps(self.mesh, sort_keys=True)).transformed(self.R, self.t)

    def local_mesh(self) -> meshes.Mesh:
        return _cached_mesh(json.dumps(self.mesh, sort_keys=True))

    def to_dict(self) -> dict:
        return {"name": self.name, "mesh": self.mesh, "R": self.R.reshape(-1).tolist(),
                "t": self.t.tolist(), "kind": self.kind, "texture": self.texture, "label": self.label}

    @classmethod
    def from_dict(cls, d: dict) -> "Node":
        return cls(d["name"], d["mesh"], np.array(d["R"], float).reshape(3, 3), np.array(d["t"], float),
                   int(d["kind"]), d["texture"], d.get("label", ""))


@lru_cache(maxsize=256)
def _cached_mesh(spec_json: str) -> meshes.Mesh:
    return meshes.build_mesh(json.loads(spec_json))


@dataclass
class Light:
    direction: np.ndarray  # unit vector the light travels along
    intensity: float
    color: np.ndarray

    def to_dict(self) -> dict:
        return {"direction": self.direction.tolist(), "intensity": self.intensity, "color": self.color.tolist()}


@dataclass
class CameraPose:
    """World-to-camera transform of the left camera: ``x_c = R @ x_w + t``."""

    R: np.ndarray
    t: np.ndarray

    @property
    def position(self) -> np.ndarray:
        return -self.R.T @ self.t

    def to_dict(self) -> dict:
        return {"R": self.R.reshape(-1).tolist(), "t": self.t.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "CameraPose":
        return cls(np.array(d["R"], float).reshape(3, 3), np.array(d["t"], float))


@dataclass
class SceneGraph:
    table: Node
    objects: List[Node]
    distractors: List[Node]
    room: List[Node]
    lights: List[Light]
    ambient: float
    camera: CameraPose
    rng_seed: Optional[int] = None
    table_top: float = 0.7

    def nodes(self) -> List[Node]:
        return [*self.room, self.table, *self.objects, *self.distractors]

    def to_dict(self) -> dict:
        return {
            "table": self.table.to_dict(),
            "objects": [n.to_dict() for n in self.objects],
            "distractors": [n.to_dict() for n in self.distractors],
            "room": [n.to_dict() for n in self.room],
            "lights": [l.to_dict() for l in self.lights],
            "ambient": self.ambient,
            "camera": self.camera.to_dict(),
            "rng_seed": self.rng_seed,
            "table_top": self.table_top,
        }

    def serialize(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def sample_camera(rng: np.random.Generator, center=(0.0, 0.0, 0.7), radius=(0.5, 2.0),
                  target_jitter: float = 0.05, roll_jitter_deg: float = 5.0) -> CameraPose:
    """Camera on the upper half-sphere around ``center`` looking back at it.

    Radius is uniform in ``radius``; the direction is uniform over the
    half-sphere surface.
    """
    center = np.asarray(center, float)
    r = rng.uniform(*radius)
    az = rng.uniform(0.0, 2 * np.pi)
    sin_el = rng.uniform(0.0, 1.0)
    cos_el = np.sqrt(1.0 - sin_el ** 2)
    eye = center + r * np.array([cos_el * np.cos(az), cos_el * np.sin(az), sin_el])
    target = center + rng.uniform(-target_jitter, target_jitter, 3)
    roll = np.radians(rng.uniform(-roll_jitter_deg, roll_jitter_deg))
    R, t = look_at(eye, target, roll=roll)
    return CameraPose(R, t)


def _random_rotation_z(rng) -> np.ndarray:
    return Rotation.from_euler("z", rng.uniform(0, 2 * np.pi)).as_matrix()


def _random_primitive(rng, kind: str, size: Tuple[float, float]) -> Tuple[dict, np.ndarray]:
    lo, hi = size
    if kind == "box":
        shape = {"type": "box", "half_extents": rng.uniform(lo, hi, 3).tolist()}
    elif kind == "cylinder":
        shape = {"type": "cylinder", "radius": float(rng.uniform(lo, 0.6 * hi)), "half_height": float(rng.uniform(lo, hi))}
    elif kind == "sphere":
        shape = {"type": "sphere", "radius": float(rng.uniform(max(lo, 0.025), 0.7 * hi))}
    elif kind == "superellipsoid":
        shape = {"type": "superellipsoid", "radii": rng.uniform(max(lo, 0.025), 0.8 * hi, 3).tolist(),
                "e1": float(rng.uniform(0.3, 1.0)), "e2": float(rng.uniform(0.3, 1.0))}
    elif kind.endswith(".obj"):
        shape = {"type": "obj", "path": kind, "size": float(rng.uniform(2 * lo, 2 * hi))}
    else:
        raise ValueError(f"unknown mesh library entry {kind!r}")
    # lying-down variants for elongated shapes
    if kind in ("box", "cylinder", "superellipsoid") and rng.random() < 0.3:
        tilt = Rotation.from_euler("x", np.pi / 2).as_matrix()
    else:
        tilt = np.eye(3)
    return shape, tilt


def _rest_on(mesh: meshes.Mesh, R: np.ndarray, xy, z_surface: float) -> np.ndarray:
    lowest = (mesh.vertices @ R.T)[:, 2].min()
    return np.array([xy[0], xy[1], z_surface - lowest])


def _collides(candidate: meshes.Mesh, placed: List[meshes.Mesh], margin: float) -> bool:
    return any(meshes.meshes_intersect(candidate, other, margin) for other in placed)


def _camera_clear(cam: CameraPose, nodes: List[Node], clearance: float = 0.05) -> bool:
    p = cam.position
    for n in nodes:
        lo, hi = n.world_mesh().bounds()
        if np.all(p > lo - clearance) and np.all(p < hi + clearance):
            return False
    return True


def sample_scene(rng: np.random.Generator, config: SceneConfig = SceneConfig(),
                 seed: Optional[int] = None) -> SceneGraph:
    cfg = config
    weights = np.asarray(cfg.texture_weights) / sum(cfg.texture_weights)

    def tex(scale: float = 1.0, kinds=None) -> dict:
        if kinds is None:
            return textures.random_texture(rng, cfg.texture_kinds, weights, scale)
        w = np.array([weights[cfg.texture_kinds.index(k)] if k in cfg.texture_kinds else 0.0 for k in kinds])
        return textures.random_texture(rng, kinds, w / w.sum(), scale)


    # room
    hx, hy = rng.uniform(*cfg.room_half_size, 2)
    height = rng.uniform(2.5, 3.5)
    room = []
    I = np.eye(3)
    room.append(Node("floor", {"type": "quad", "width": 2 * hx, "height": 2 * hy}, I, np.zeros(3), KIND_ROOM, tex(cfg.room_texture_scale, cfg.room_texture_kinds)))
    room.append(Node("ceiling", {"type": "quad", "width": 2 * hx, "height": 2 * hy},
                     Rotation.from_euler("x", np.pi).as_matrix(), np.array([0, 0, height]), KIND_ROOM, tex(cfg.room_texture_scale, cfg.room_texture_kinds)))
    for name, R, t, w in (
        ("wall_px", Rotation.from_euler("y", -np.pi / 2).as_matrix(), [hx, 0, height / 2], (height, 2 * hy)),
        ("wall_nx", Rotation.from_euler("y", np.pi / 2).as_matrix(), [-hx, 0, height / 2], (height, 2 * hy)),
        ("wall_py", Rotation.from_euler("x", np.pi / 2).as_matrix(), [0, hy, height / 2], (2 * hx, height)),
        ("wall_ny", Rotation.from_euler("x", -np.pi / 2).as_matrix(), [0, -hy, height / 2], (2 * hx, height)),
    ):
        room.append(Node(name, {"type": "quad", "width": w[0], "height": w[1]}, R, np.array(t, float), KIND_ROOM, tex(cfg.room_texture_scale, cfg.room_texture_kinds)))

    # table: a slab whose upper face is the support surface
    top_z = float(rng.uniform(*cfg.table_height))
    tw, td = rng.uniform(*cfg.table_size, 2)
    thick = 0.04
    table = Node("table", {"type": "box", "half_extents": [tw / 2, td / 2, thick / 2]},
                 _random_rotation_z(rng), np.array([0.0, 0.0, top_z - thick / 2]), KIND_TABLE_SIDE, tex())
    legs = []
    for sx in (-1, 1):
        for sy in (-1, 1):
            local = np.array([sx * (tw / 2 - 0.05), sy * (td / 2 - 0.05), 0.0])
            p = table.R @ local
            legs.append(Node(f"leg_{len(legs)}", {"type": "box", "half_extents": [0.025, 0.025, (top_z - thick) / 2]},
                             table.R, np.array([p[0], p[1], (top_z - thick) / 2]), KIND_TABLE_SIDE, table.texture))

    # objects on the table
    objects: List[Node] = []
    placed: List[meshes.Mesh] = []
    n_obj = int(rng.integers(cfg.min_objects, cfg.max_objects + 1)) if cfg.max_objects > 0 else 0
    if cfg.scene_type == "shirts":
        n_obj = min(n_obj, 1)  # one garment per table
    for k in range(n_obj):
        for attempt in range(cfg.max_attempts):
            if cfg.scene_type == "shirts":
                state = str(rng.choice(meshes.FOLD_STATES))
                width = float(rng.uniform(0.22, 0.34))
                shape = {"type": "shirt", "width": width, "length": float(width * rng.uniform(1.1, 1.4)),
                        "sleeve": float(width * rng.uniform(0.25, 0.4)), "state": state}
                tilt, label = np.eye(3), "shirt"
            else:
                kind = str(rng.choice(cfg.mesh_library))
                shape, tilt = _random_primitive(rng, kind, cfg.object_size)
                label = shape["type"]
            R = table.R @ _random_rotation_z(rng) @ tilt
            mesh = _cached_mesh(json.dumps(shape, sort_keys=True))
            lo, hi = mesh.bounds()
            reach = np.linalg.norm(np.maximum(np.abs(lo), np.abs(hi))[:2])
            if reach > min(tw, td) / 2:
                continue
            local_xy = rng.uniform([-tw / 2 + reach, -td / 2 + reach], [tw / 2 - reach, td / 2 - reach])
            xy = (table.R @ np.array([local_xy[0], local_xy[1], 0.0]))[:2]
            t = _rest_on(mesh, R, xy, top_z)
            if shape["type"] == "shirt":
                t[2] += SHEET_LIFT
            wm = mesh.transformed(R, t)
            if _collides(wm, placed, cfg.placement_margin):
                continue
            objects.append(Node(f"object_{k}", shape, R, t, KIND_OBJECT, tex(), label))
            placed.append(wm)
            break
        else:
            raise PlacementError(f"could not place object {k} after {cfg.max_attempts} attempts")

    # distractor furniture on the floor around the table
    distractors: List[Node] = []
    table_reach = np.hypot(tw, td) / 2
    n_dis = int(rng.integers(cfg.min_distractors, cfg.max_distractors + 1)) if cfg.max_distractors > 0 else 0
    floor_placed = [table.world_mesh()] + [l.world_mesh() for l in legs]
    for k in range(n_dis):
        for attempt in range(cfg.max_attempts):
            he = [float(rng.uniform(0.15, 0.5)), float(rng.uniform(0.15, 0.5)), float(rng.uniform(0.2, 0.9))]
            shape = {"type": "box", "half_extents": he}
            R = _random_rotation_z(rng)
            ang = rng.uniform(0, 2 * np.pi)
            dist = table_reach + np.hypot(he[0], he[1]) + rng.uniform(0.05, 1.0)
            xy = dist * np.array([np.cos(ang), np.sin(ang)])
            if np.any(np.abs(xy) + np.hypot(he[0], he[1]) > np.array([hx, hy]) - 0.05):
                continue
            mesh = _cached_mesh(json.dumps(shape, sort_keys=True))
            t = _rest_on(mesh, R, xy, 0.0)
            wm = mesh.transformed(R, t)
            if _collides(wm, floor_placed, cfg.placement_margin):
                continue
            distractors.append(Node(f"distractor_{k}", shape, R, t, KIND_DISTRACTOR, tex(cfg.room_texture_scale, cfg.room_texture_kinds), "distractor"))
            floor_placed.append(wm)
            break
        else:
            raise PlacementError(f"could not place distractor {k} after {cfg.max_attempts} attempts")

    # lights
    lights = []
    for _ in range(int(rng.integers(cfg.min_lights, cfg.max_lights + 1))):
        d = rng.normal(size=3)
        d[2] = -abs(d[2]) - 0.3
        lights.append(Light(d / np.linalg.norm(d), float(rng.uniform(0.3, 1.0)),
                            np.clip(1.0 - rng.uniform(0.0, 0.3, 3), 0, 1)))
    ambient = float(rng.uniform(0.15, 0.4))
    # bound total irradiance so brightly lit faces do not saturate
    budget = float(rng.uniform(0.7, 1.1)) - ambient
    total = sum(l.intensity for l in lights)
    for l in lights:
        l.intensity *= budget / total

    center = np.array([0.0, 0.0, top_z])
    blockers = [*objects, *distractors, table, *legs]
    for attempt in range(cfg.max_attempts):
        cam = sample_camera(rng, center, (cfg.radius_min, cfg.radius_max), cfg.target_jitter, cfg.roll_jitter_deg)
        if _camera_clear(cam, blockers) and np.all(np.abs(cam.position[:2]) < np.array([hx, hy]) - 0.1) \
                and cam.position[2] < height - 0.1:
            break
    else:
        raise PlacementError("could not place the camera")

    scene = SceneGraph(table, objects, distractors, room + legs, lights, ambient, cam, seed, top_z)
    return scene
