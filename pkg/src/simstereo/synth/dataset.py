"""Write generated scenes to disk with a checksummed manifest.

Layout::

    <dir>/manifest.json
    <dir>/scene_00000/left.png right.png disparity.pfm seg.png depth_noisy.pfm
                      nonocc.png labels.json
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .. import io
from ..errors import DatasetIOError, PlacementError
from ..geometry import CameraIntrinsics, Obb, StereoRig
from ..stereo import DisparityMap
from .noise import DepthNoiseParams, inject_depth_noise
from .raster import SceneSample, render_stereo
from .scene import SceneConfig, sample_scene

SCENE_FILES = ("left.png", "right.png", "disparity.pfm", "seg.png", "depth_noisy.pfm", "nonocc.png", "labels.json")
FORMAT_VERSION = 1


@dataclass(frozen=True)
class DatasetConfig:
    width: int = 960
    height: int = 512
    fx: float = 480.0
    baseline: float = 0.12
    scene: SceneConfig = SceneConfig()
    noise: DepthNoiseParams = DepthNoiseParams()
    max_retries: int = 10

    @property
    def rig(self) -> StereoRig:
        cam = CameraIntrinsics(self.fx, self.fx, (self.width - 1) / 2.0, (self.height - 1) / 2.0,
                               self.width, self.height)
        return StereoRig(cam, self.baseline)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name not in ("scene", "noise")}
        d["scene"] = self.scene.to_dict()
        d["noise"] = {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self.noise).items()}
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def scene_seed(seed: int, index: int, attempt: int = 0) -> int:
    """Child seed for one scene, independent of generation order."""
    return int(np.random.SeedSequence([seed, index, attempt]).generate_state(1, dtype=np.uint32)[0])


def generate_sample(config: DatasetConfig, seed: int, index: int) -> SceneSample:
    last = None
    for attempt in range(config.max_retries):
        s = scene_seed(seed, index, attempt)
        rng = np.random.default_rng(s)
        try:
            scene = sample_scene(rng, config.scene, seed=s)
        except PlacementError as exc:
            last = exc
            continue
        sample = render_stereo(scene, config.rig)
        sample.noisy_depth = inject_depth_noise(sample.depth, np.random.default_rng([s, 1]), config.noise)
        sample.scene = scene
        return sample
    raise PlacementError(f"scene {index}: {last}")


def labels_dict(sample: SceneSample) -> dict:
    return {
        "boxes": [b.to_dict() for b in sample.boxes],
        "covariances": [c.reshape(-1).tolist() for c in sample.covariances],
        "classes": list(sample.labels),
        "keypoints": {k: [list(p) for p in v] for k, v in sample.keypoints.items()},
        "camera": sample.rig.to_dict(),
        "pose": sample.camera.to_dict(),
        "seed": sample.seed,
    }


def write_sample(directory: Path, sample: SceneSample) -> Dict[str, str]:
    directory.mkdir(parents=True, exist_ok=True)
    io.write_png8(directory / "left.png", io.to_uint8(sample.left))
    io.write_png8(directory / "right.png", io.to_uint8(sample.right))
    io.write_disparity_pfm(directory / "disparity.pfm", sample.gt_disparity)
    io.write_png8(directory / "seg.png", sample.seg.astype(np.uint8))
    io.write_pfm(directory / "depth_noisy.pfm", sample.noisy_depth)
    io.write_png8(directory / "nonocc.png", sample.non_occluded.astype(np.uint8) * 255)
    io.dump_json(directory / "labels.json", labels_dict(sample))
    return {name: io.sha256_file(directory / name) for name in SCENE_FILES}


def _generate_one(args):
    root, config, seed, index = args
    name = f"scene_{index:05d}"
    try:
        sample = generate_sample(config, seed, index)
        sums = write_sample(Path(root) / name, sample)
    except OSError as exc:
        raise DatasetIOError(index, str(exc)) from exc
    return {"index": index, "name": name, "seed": sample.seed, "files": sums}


def write_dataset(directory, n_scenes: int, config: DatasetConfig = DatasetConfig(), seed: int = 0,
                  workers: int = 1) -> dict:
    """Generate ``n_scenes`` scenes under ``directory`` and return the manifest.

    Output does not depend on ``workers``.
    """
    root = Path(directory)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DatasetIOError(-1, str(exc)) from exc
    jobs = [(str(root), config, seed, i) for i in range(n_scenes)]
    with io.PartialMarker(root):
        if workers > 1 and n_scenes > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                entries = list(pool.map(_generate_one, jobs))
        else:
            entries = [_generate_one(j) for j in jobs]
        manifest = {
            "format_version": FORMAT_VERSION,
            "seed": seed,
            "config_hash": config.digest(),
            "config": config.to_dict(),
            "scenes": entries,
        }
        try:
            io.dump_json(root / "manifest.json", manifest)
        except OSError as exc:
            raise DatasetIOError(-1, str(exc)) from exc
    return manifest


@dataclass
class LoadedScene:
    left: np.ndarray
    right: np.ndarray
    gt_disparity: DisparityMap
    seg: np.ndarray
    non_occluded: np.ndarray
    noisy_depth: np.ndarray
    boxes: List[Obb]
    covariances: List[np.ndarray]
    keypoints: Dict[str, list]
    rig: StereoRig
    labels: dict = field(default_factory=dict)


def load_scene(directory) -> LoadedScene:
    d = Path(directory)
    lab = io.load_json(d / "labels.json")
    return LoadedScene(
        left=io.read_image(d / "left.png"),
        right=io.read_image(d / "right.png"),
        gt_disparity=io.read_disparity_pfm(d / "disparity.pfm"),
        seg=np.array(io.read_png16(d / "seg.png")).astype(np.int64),
        non_occluded=io.read_png16(d / "nonocc.png") > 0,
        noisy_depth=io.read_pfm(d / "depth_noisy.pfm"),
        boxes=[Obb.from_dict(b) for b in lab["boxes"]],
        covariances=[np.array(c, float).reshape(3, 3) for c in lab["covariances"]],
        keypoints=lab["keypoints"],
        rig=StereoRig.from_dict(lab["camera"]),
        labels=lab,
    )


def scene_dirs(root) -> List[Path]:
    manifest = io.load_json(Path(root) / "manifest.json")
    return [Path(root) / e["name"] for e in manifest["scenes"]]
