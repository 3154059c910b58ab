"""Run configuration: one flat TOML table of ``key = value`` pairs.

Every key belongs to exactly one group (run, dataset, scene, noise, stereo,
codec, eval) and keeps the name of the field it sets. Unknown keys and
out-of-range values raise ``ConfigError``. Command-line flags are applied on
top with ``RunConfig.override``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

import tomli

from .codec import CodecConfig
from .errors import ConfigError
from .pipeline import StereoConfig
from .synth.noise import DepthNoiseParams
from .synth.scene import SceneConfig


@dataclass(frozen=True)
class RunSettings:
    seed: int = 0
    workers: int = 1
    scenes: int = 10


@dataclass(frozen=True)
class DatasetSettings:
    width: int = 960
    height: int = 512
    fx: float = 480.0
    baseline: float = 0.12


@dataclass(frozen=True)
class EvalSettings:
    iou_thresh: float = 0.25
    kp_match_radius: float = 20.0
    interpolation: str = "11point"
    plan_threshold: float = 0.3


_GROUPS = {
    "run": RunSettings,
    "dataset": DatasetSettings,
    "scene": SceneConfig,
    "noise": DepthNoiseParams,
    "stereo": StereoConfig,
    "codec": CodecConfig,
    "eval": EvalSettings,
}

# (low, high) inclusive bounds; None leaves a side open
_RANGES: Dict[str, Tuple[Optional[float], Optional[float]]] = {
    "seed": (0, 2**63 - 1), "workers": (1, 1024), "scenes": (0, None),
    "width": (8, 8192), "height": (8, 8192), "fx": (1e-6, None), "baseline": (1e-6, None),
    "min_objects": (0, None), "max_objects": (0, None), "min_distractors": (0, None),
    "max_distractors": (0, None), "min_lights": (1, None), "max_lights": (1, None),
    "radius_min": (1e-3, None), "radius_max": (1e-3, None), "max_attempts": (1, None),
    "sigma_mult": (0, None), "sigma_add": (0, None), "max_aspect": (1, None), "edge_bias": (0, 1),
    "num_slices": (1, 1024), "disparity_stride": (1e-6, None), "temperature": (1e-9, None),
    "delta": (1e-9, None), "kernel_size": (1, 99), "fuse_radius": (0, 50),
    "sigma": (1e-6, None), "detect_threshold": (0, 1), "supervise_threshold": (0, 1),
    "kp_threshold": (0, 1), "nms_window": (1, None), "kp_radius": (0, None),
    "iou_thresh": (0, 1), "kp_match_radius": (0, None), "plan_threshold": (0, 1),
}
_OPTIONAL_INT = {"softmax_window"}
_CHOICES = {"interpolation": ("11point", "continuous"), "scene_type": ("objects", "shirts"),
            "kernel_kind": ("box", "gaussian", "bilateral")}


def _key_index() -> Dict[str, Tuple[str, dataclasses.Field]]:
    index: Dict[str, Tuple[str, dataclasses.Field]] = {}
    for group, cls in _GROUPS.items():
        for f in fields(cls):
            if f.name in index:
                raise RuntimeError(f"config key {f.name!r} is defined twice")
            index[f.name] = (group, f)
    return index


KEYS = _key_index()


def _coerce(key: str, value: Any, default: Any) -> Any:
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected a boolean")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{key}: expected a list")
        return tuple(_coerce(key, v, default[0]) if default else v for v in value)
    if isinstance(default, int) or key in _OPTIONAL_INT:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer")
        return value
    if isinstance(default, float) or default is None:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number")
        if not math.isfinite(value):
            raise ConfigError(f"{key}: must be finite")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string")
        return value
    return value


def _check_range(key: str, value: Any) -> None:
    if key in _CHOICES and value not in _CHOICES[key]:
        raise ConfigError(f"{key}: must be one of {', '.join(_CHOICES[key])}")
    lo, hi = _RANGES.get(key, (None, None))
    vals = value if isinstance(value, tuple) else (value,)
    for v in vals:
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            continue
        if (lo is not None and v < lo) or (hi is not None and v > hi):
            raise ConfigError(f"{key}: {v} outside [{lo}, {hi if hi is not None else 'inf'}]")


@dataclass(frozen=True)
class RunConfig:
    run: RunSettings = RunSettings()
    dataset: DatasetSettings = DatasetSettings()
    scene: SceneConfig = SceneConfig()
    noise: DepthNoiseParams = DepthNoiseParams()
    stereo: StereoConfig = StereoConfig()
    codec: CodecConfig = CodecConfig()
    eval: EvalSettings = EvalSettings()

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> "RunConfig":
        return cls().override(values)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path, "rb") as f:
                data = tomli.load(f)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc
        for k, v in data.items():
            if isinstance(v, dict):
                raise ConfigError(f"{k}: tables are not allowed; use flat keys")
        return cls.from_mapping(data)

    def override(self, values: Mapping[str, Any]) -> "RunConfig":
        """Copy with ``values`` applied; ``None`` values are ignored."""
        updates: Dict[str, Dict[str, Any]] = {}
        for key in sorted(values):
            value = values[key]
            if value is None:
                continue
            if key not in KEYS:
                raise ConfigError(f"unknown config key {key!r}")
            group, f = KEYS[key]
            v = _coerce(key, value, f.default)
            _check_range(key, v)
            updates.setdefault(group, {})[key] = v
        groups = {}
        for group, kw in updates.items():
            try:
                groups[group] = replace(getattr(self, group), **kw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"invalid {group} settings: {exc}") from exc
        cfg = replace(self, **groups)
        cfg._validate()
        return cfg

    def _validate(self) -> None:
        s = self.scene
        for lo, hi in (("min_objects", "max_objects"), ("min_distractors", "max_distractors"),
                       ("min_lights", "max_lights"), ("radius_min", "radius_max")):
            if getattr(s, lo) > getattr(s, hi):
                raise ConfigError(f"{lo} must not exceed {hi}")
        if self.dataset.width % 8 or self.dataset.height % 8:
            raise ConfigError("width and height must be multiples of 8")

    def dataset_config(self):
        from .synth.dataset import DatasetConfig

        d = self.dataset
        return DatasetConfig(width=d.width, height=d.height, fx=d.fx, baseline=d.baseline,
                             scene=self.scene, noise=self.noise)

    def to_dict(self) -> dict:
        out = {}
        for group in _GROUPS:
            for f in fields(getattr(self, group)):
                v = getattr(getattr(self, group), f.name)
                out[f.name] = list(v) if isinstance(v, tuple) else v
        return out


def load_config(path: Optional[str] = None, overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    cfg = RunConfig.load(path) if path else RunConfig()
    return cfg.override(overrides or {})


def write_example_config(path) -> None:
    """Write every key with its default value."""
    lines = []
    for group in _GROUPS:
        lines.append(f"# {group}")
        for k, v in RunConfig().to_dict().items():
            if KEYS[k][0] != group or v is None:
                continue
            lines.append(f"{k} = {_toml_value(v)}")
        lines.append("")
    Path(path).write_text("\n".join(lines))


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return f'"{v}"'
    if isinstance(v, list):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    return repr(v)
