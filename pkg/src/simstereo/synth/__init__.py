"""Procedural tabletop scenes, software rendering and dataset export."""

from .dataset import DatasetConfig, generate_sample, load_scene, write_dataset
from .noise import DepthNoiseParams, inject_depth_noise
from .raster import SceneSample, rasterize, render_stereo
from .scene import SceneConfig, SceneGraph, sample_camera, sample_scene

__all__ = [
    "DatasetConfig", "DepthNoiseParams", "SceneConfig", "SceneGraph", "SceneSample",
    "generate_sample", "inject_depth_noise", "load_scene", "rasterize", "render_stereo",
    "sample_camera", "sample_scene", "write_dataset",
]
