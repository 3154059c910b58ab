import sys

import numpy as np
import pytest

from simstereo.geometry import CameraIntrinsics, StereoRig
from simstereo.synth.dataset import DatasetConfig, write_dataset
from simstereo.synth.scene import SceneConfig

SMALL = dict(width=320, height=192, fx=160.0)


@pytest.fixture(scope="session")
def small_config():
    return DatasetConfig(**SMALL)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory, small_config):
    root = tmp_path_factory.mktemp("objects")
    write_dataset(root, 3, small_config, seed=7, workers=1)
    return root


@pytest.fixture(scope="session")
def shirt_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("shirts")
    cfg = DatasetConfig(**SMALL, scene=SceneConfig(scene_type="shirts"))
    write_dataset(root, 2, cfg, seed=1, workers=1)
    return root


@pytest.fixture
def cam():
    return CameraIntrinsics(500.0, 500.0, 319.5, 239.5, 640, 480)


@pytest.fixture
def rig(cam):
    return StereoRig(cam, 0.12)


def textured_image(rng, height, width, scale=4):
    """Smooth random texture with structure at the block-averaged matching scale."""
    from scipy import ndimage

    base = rng.random((height // scale + 8, width // scale + 8))
    img = ndimage.zoom(base, scale, order=1)[:height, :width]
    return ndimage.gaussian_filter(img, 0.7)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
