import os
import tempfile

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from simstereo import io
from simstereo.config import KEYS, RunConfig, load_config, write_example_config
from simstereo.errors import ConfigError
from simstereo.metrics import PrCurve
from simstereo.plotting import write_pr_report
from simstereo.stereo import DisparityMap


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 20), st.integers(1, 20), st.integers(0, 2**31))
def test_pfm_round_trip(h, w, seed):
    data = np.random.default_rng(seed).standard_normal((h, w)).astype(np.float32)
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "x.pfm")
        io.write_pfm(path, data)
        np.testing.assert_array_equal(io.read_pfm(path), data)


def test_pfm_color_and_bad_header(tmp_path):
    data = np.random.default_rng(0).random((4, 5, 3)).astype(np.float32)
    io.write_pfm(tmp_path / "c.pfm", data)
    np.testing.assert_array_equal(io.read_pfm(tmp_path / "c.pfm"), data)
    (tmp_path / "bad.pfm").write_bytes(b"P6\n1 1\n255\n\0\0\0")
    with pytest.raises(ValueError):
        io.read_pfm(tmp_path / "bad.pfm")


def test_disparity_pfm_keeps_invalid(tmp_path):
    valid = np.ones((3, 4), bool)
    valid[1, 2] = False
    d = DisparityMap(np.arange(12.0).reshape(3, 4), valid)
    io.write_disparity_pfm(tmp_path / "d.pfm", d)
    back = io.read_disparity_pfm(tmp_path / "d.pfm")
    np.testing.assert_array_equal(back.valid, valid)
    np.testing.assert_array_equal(back.data[valid], d.data[valid])


def test_disparity_png_quantization(tmp_path):
    data = np.array([[0.0, 1.0 / 512, 10.3, 255.9]])
    valid = np.array([[True, True, True, False]])
    io.write_disparity_png(tmp_path / "d.png", DisparityMap(data, valid))
    back = io.read_disparity_png(tmp_path / "d.png")
    # valid zero disparity is kept valid at the smallest code
    np.testing.assert_array_equal(back.valid, valid)
    assert np.abs(back.data[valid] - data[valid]).max() <= 1.0 / 256
    assert io.read_png16(tmp_path / "d.png").dtype == np.uint16


def test_partial_marker(tmp_path):
    with io.PartialMarker(tmp_path / "out"):
        assert (tmp_path / "out" / ".partial").exists()
    assert not (tmp_path / "out" / ".partial").exists()
    with pytest.raises(RuntimeError):
        with io.PartialMarker(tmp_path / "bad"):
            raise RuntimeError("boom")
    assert (tmp_path / "bad" / ".partial").exists()


def test_json_and_hash(tmp_path):
    io.dump_json(tmp_path / "a.json", {"b": 1, "a": [1.5, None]})
    assert io.load_json(tmp_path / "a.json") == {"a": [1.5, None], "b": 1}
    assert (tmp_path / "a.json").read_text().index('"a"') < (tmp_path / "a.json").read_text().index('"b"')
    assert len(io.sha256_file(tmp_path / "a.json")) == 64


def test_config_defaults_and_overrides(tmp_path):
    cfg = load_config()
    assert cfg.run.seed == 0 and cfg.eval.iou_thresh == 0.25
    p = tmp_path / "c.toml"
    p.write_text("seed = 5\nnum_slices = 17\ntemperature = 0.2\n")
    cfg = load_config(str(p), {"seed": 9, "workers": None})
    assert (cfg.run.seed, cfg.stereo.num_slices, cfg.stereo.temperature) == (9, 17, 0.2)
    assert cfg.run.workers == 1


@pytest.mark.parametrize("text,needle", [
    ("bogus = 1\n", "bogus"),
    ("seed = -1\n", "seed"),
    ("interpolation = 'cubic'\n", "interpolation"),
    ("num_slices = 2.5\n", "num_slices"),
    ("width = 100\n", "multiples of 8"),
    ("min_objects = 5\nmax_objects = 2\n", "min_objects"),
    ("[stereo]\nnum_slices = 3\n", "tables"),
    ("seed = \n", "malformed"),
])
def test_config_rejects_bad_values(tmp_path, text, needle):
    p = tmp_path / "c.toml"
    p.write_text(text)
    with pytest.raises(ConfigError, match=needle):
        load_config(str(p))


def test_example_config_round_trips(tmp_path):
    write_example_config(tmp_path / "ex.toml")
    cfg = RunConfig.load(tmp_path / "ex.toml")
    assert cfg == RunConfig()
    assert set(cfg.to_dict()) == set(KEYS)
    assert cfg.dataset_config().rig.intrinsics.width == 960


def _curves():
    return {"obb": PrCurve([(0.0, 1.0), (0.5, 1.0), (0.5, 0.5)], 0.5, [1.0, 0.5, 0.0])}


def test_pr_report_is_byte_identical(tmp_path):
    write_pr_report(tmp_path / "a", "pr", _curves(), "t")
    write_pr_report(tmp_path / "b", "pr", _curves(), "t")
    for name in ("pr.svg", "pr.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rows = (tmp_path / "a" / "pr.csv").read_text().splitlines()
    assert rows[0] == "series,threshold,recall,precision" and len(rows) == 4
    assert (tmp_path / "a" / "pr.svg").read_text().lstrip().startswith("<?xml")
