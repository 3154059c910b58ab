import dataclasses

import numpy as np
import pytest
from scipy.ndimage import map_coordinates
from scipy.spatial import ConvexHull

from simstereo.codec import KIND_TABLE_TOP, SHIRT_KEYPOINTS
from simstereo.geometry import CameraIntrinsics, StereoRig
from simstereo.synth import meshes, textures
from simstereo.synth.dataset import (
    DatasetConfig, generate_sample, load_scene, scene_dirs, scene_seed, write_dataset,
)
from simstereo.synth.noise import DepthNoiseParams, depth_edges, inject_depth_noise, sample_dropouts
from simstereo.synth.raster import render_stereo
from simstereo.synth.scene import CameraPose, Light, Node, SceneConfig, SceneGraph, sample_camera, sample_scene


def test_camera_radius_distribution():
    rng = np.random.default_rng(0)
    center = np.array([0.0, 0.0, 0.7])
    pos = np.array([sample_camera(rng, center).position for _ in range(10_000)])
    r = np.linalg.norm(pos - center, axis=1)
    assert r.min() >= 0.5 - 1e-9 and r.max() <= 2.0 + 1e-9
    assert r.mean() == pytest.approx(1.25, abs=0.02)
    assert (pos[:, 2] >= center[2] - 1e-9).all()


def test_camera_pose_is_deterministic():
    a = sample_camera(np.random.default_rng(5))
    b = sample_camera(np.random.default_rng(5))
    np.testing.assert_array_equal(a.R, b.R)
    np.testing.assert_array_equal(a.t, b.t)


def test_empty_table_scene():
    sg = sample_scene(np.random.default_rng(1), SceneConfig(min_objects=0, max_objects=0))
    assert sg.objects == []
    cfg = DatasetConfig(width=160, height=96, fx=80.0, scene=SceneConfig(min_objects=0, max_objects=0))
    assert generate_sample(cfg, 0, 0).boxes == []


def test_scene_serialization_is_deterministic():
    a = sample_scene(np.random.default_rng(42), seed=42).serialize()
    b = sample_scene(np.random.default_rng(42), seed=42).serialize()
    assert a == b


def _penetrates(a: meshes.Mesh, b: meshes.Mesh, rng) -> bool:
    hull = ConvexHull(b.vertices)
    pts = np.vstack([a.vertices, a.sample_surface(200, rng)])
    inside = (pts @ hull.equations[:, :3].T + hull.equations[:, 3] < -1e-6).all(axis=1)
    return bool(inside.any())


@pytest.mark.slow
def test_placed_objects_never_interpenetrate():
    # primitives in the default library are convex, so hull containment is exact
    rng = np.random.default_rng(0)
    failures = 0
    for i in range(1000):
        sg = sample_scene(np.random.default_rng(i))
        ms = [n.world_mesh() for n in sg.objects]
        for a in range(len(ms)):
            for b in range(len(ms)):
                if a != b and _penetrates(ms[a], ms[b], rng):
                    failures += 1
    assert failures == 0


def _quad_scene(z=1.0):
    tex = {"kind": "perlin", "colors": [[0.1, 0.2, 0.3], [0.9, 0.8, 0.7]], "seed": 3,
           "frequency": 20.0, "octaves": 3, "contrast": 2.0}
    quad = Node("quad", {"type": "quad", "width": 3.0, "height": 3.0}, np.eye(3), np.array([0.0, 0.0, z]),
                KIND_TABLE_TOP, tex)
    light = Light(np.array([0.0, 0.0, 1.0]), 0.6, np.ones(3))
    return SceneGraph(quad, [], [], [], [light], 0.3, CameraPose(np.eye(3), np.zeros(3)), 0, z)


def test_fronto_parallel_quad_has_constant_disparity():
    rig = StereoRig(CameraIntrinsics(500.0, 500.0, 159.5, 119.5, 320, 240), 0.12)
    s = render_stereo(_quad_scene(), rig)
    assert s.gt_disparity.valid.all()
    np.testing.assert_allclose(s.gt_disparity.data, 60.0, atol=1e-9)
    # integer disparity makes the warp exact
    L, R = s.left.mean(-1), s.right.mean(-1)
    v, u = np.nonzero(s.non_occluded)
    assert np.abs(R[v, u - 60] - L[v, u]).max() * 255 < 1e-6
    assert not s.non_occluded[:, :60].any()


def test_photometric_consistency_on_generated_scenes():
    cfg = DatasetConfig(width=320, height=192, fx=160.0)
    for i in range(3):
        s = generate_sample(cfg, 5, i)
        d = s.gt_disparity.data
        L, R = s.left.mean(-1), s.right.mean(-1)
        v, u = np.nonzero(s.non_occluded)
        err = np.abs(map_coordinates(R, [v, u - d[v, u]], order=1) - L[v, u]) * 255
        # bilinear resampling is inexact only across texture and depth edges
        assert np.median(err) <= 2.0
        assert (err <= 2.0).mean() >= 0.9


def test_generated_labels_are_consistent(small_config):
    s = generate_sample(small_config, 3, 1)
    H, W = s.seg.shape
    assert sum(np.bincount(s.seg.ravel(), minlength=3)) == H * W
    assert set(np.unique(s.seg)) <= {0, 1, 2}
    ok = s.gt_disparity.valid
    np.testing.assert_allclose(s.gt_disparity.data[ok] * s.depth[ok], s.rig.intrinsics.fx * s.rig.baseline)
    assert not (s.non_occluded & ~ok).any()
    assert len(s.boxes) == len(s.covariances) == len(s.labels)
    for k, box in enumerate(s.boxes):
        # visible object pixels back-project inside their label box
        m = s.instance == k
        if m.sum() < 20:
            continue
        v, u = np.nonzero(m)
        X = s.rig.intrinsics.rays(np.stack([u, v], 1)) * s.depth[v, u][:, None]
        assert box.contains(X, margin=0.01).mean() > 0.99


def test_generate_sample_is_deterministic(small_config):
    a, b = generate_sample(small_config, 9, 2), generate_sample(small_config, 9, 2)
    np.testing.assert_array_equal(a.left, b.left)
    np.testing.assert_array_equal(a.noisy_depth, b.noisy_depth)
    assert scene_seed(9, 2) != scene_seed(9, 3) != scene_seed(10, 2)


def test_noise_identity_when_disabled():
    z = np.random.default_rng(0).uniform(0.5, 2, (40, 50))
    p = DepthNoiseParams(sigma_mult=0.0, sigma_add=0.0, ellipses=(0, 0))
    np.testing.assert_array_equal(inject_depth_noise(z, np.random.default_rng(1), p), z)


def test_dropout_fraction():
    z = np.ones((100, 100))
    p = DepthNoiseParams(sigma_mult=0.0, sigma_add=0.0, ellipses=(5, 5), area=(200.0, 200.0))
    frac = [(inject_depth_noise(z, np.random.default_rng(s), p) == 0).mean() for s in range(100)]
    assert np.mean(frac) == pytest.approx(0.10, abs=0.03)


def test_dropouts_favour_depth_edges():
    z = np.ones((120, 160))
    z[:, 80:] = 2.0
    z[40:80, 20:60] = 0.5
    edges = depth_edges(z)
    from scipy.ndimage import distance_transform_edt

    dist = distance_transform_edt(~edges)
    near = []
    for s in range(50):
        for (u, v), _, _ in sample_dropouts(z, np.random.default_rng(s)):
            near.append(dist[int(round(v)) % 120, int(round(u)) % 160] <= 5)
    assert np.mean(near) >= 0.7


def test_dataset_layout_checksums_and_hash(tmp_path, small_config):
    m1 = write_dataset(tmp_path / "a", 3, small_config, seed=4)
    m2 = write_dataset(tmp_path / "b", 3, small_config, seed=4)
    assert len(m1["scenes"]) == 3 and len(scene_dirs(tmp_path / "a")) == 3
    assert sorted(p.name for p in (tmp_path / "a").iterdir()) == [
        "manifest.json", "scene_00000", "scene_00001", "scene_00002"]
    assert [e["files"] for e in m1["scenes"]] == [e["files"] for e in m2["scenes"]]
    assert (tmp_path / "a" / "manifest.json").read_bytes() == (tmp_path / "b" / "manifest.json").read_bytes()
    sc = load_scene(tmp_path / "a" / "scene_00000")
    assert sc.left.shape == (small_config.height, small_config.width, 3)
    assert len(sc.boxes) == len(sc.covariances)


def test_config_hash_changes_with_every_field():
    base = DatasetConfig()
    variants = []
    for f in dataclasses.fields(DatasetConfig):
        v = getattr(base, f.name)
        if f.name == "scene":
            new = dataclasses.replace(v, max_objects=v.max_objects + 1)
        elif f.name == "noise":
            new = dataclasses.replace(v, sigma_add=v.sigma_add * 2)
        else:
            new = v + 1
        variants.append(dataclasses.replace(base, **{f.name: new}))
    for f in dataclasses.fields(SceneConfig):
        v = getattr(base.scene, f.name)
        if isinstance(v, str):
            new = "shirts" if v != "shirts" else "objects"
        elif isinstance(v, tuple):
            new = v[:-1] if isinstance(v[0], str) else tuple(x * 1.01 for x in v)
        else:
            new = v + 1
        variants.append(dataclasses.replace(base, scene=dataclasses.replace(base.scene, **{f.name: new})))
    assert len(variants) == 7 + 22
    assert all(v.digest() != base.digest() for v in variants)


def test_shirt_scene_has_keypoints(shirt_dataset):
    sc = load_scene(scene_dirs(shirt_dataset)[0])
    assert set(sc.keypoints) == set(SHIRT_KEYPOINTS)
    assert sum(len(v) for v in sc.keypoints.values()) > 0


def test_meshes():
    b = meshes.box([0.1, 0.2, 0.3])
    assert b.face_areas().sum() == pytest.approx(8 * (0.02 + 0.03 + 0.06))
    rng = np.random.default_rng(0)
    pts = b.sample_surface(500, rng)
    assert np.isclose(np.abs(pts) / [0.1, 0.2, 0.3], 1.0).any(axis=1).all()
    for state in meshes.FOLD_STATES:
        s = meshes.shirt(0.3, 0.4, 0.1, state)
        assert {k: len(v) for k, v in s.keypoints.items()} == {"sleeve": 2, "neck": 1, "bottom_corner": 2}
    moved = b.transformed(np.eye(3), np.array([1.0, 0.0, 0.0]))
    assert meshes.meshes_intersect(b, b) and not meshes.meshes_intersect(b, moved)


def test_textures_in_unit_range():
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1, 1, (500, 3))
    for kind in textures.TEXTURE_KINDS:
        tex = textures.random_texture(rng, (kind,))
        a = textures.evaluate(tex, pts)
        assert a.shape == (500, 3) and a.min() >= 0 and a.max() <= 1
        np.testing.assert_array_equal(a, textures.evaluate(tex, pts))
