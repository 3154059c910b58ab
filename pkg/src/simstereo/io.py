"""File formats: PFM float maps, 16-bit KITTI-style disparity PNGs, JSON."""

from __future__ import annotations

import hashlib
import json
import os
import re
from pathlib import Path

import numpy as np
from PIL import Image

from .stereo import DisparityMap


def write_pfm(path, data: np.ndarray, scale: float = -1.0) -> None:
    """Write a single-channel (H, W) or color (H, W, 3) float map.

    Rows are stored bottom-up; a negative scale marks little-endian data.
    """
    data = np.asarray(data, dtype="<f4")
    color = data.ndim == 3
    h, w = data.shape[:2]
    header = f"{'PF' if color else 'Pf'}\n{w} {h}\n{-abs(scale):.1f}\n".encode("ascii")
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(data[::-1]).tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        kind = f.readline().strip()
        if kind not in (b"Pf", b"PF"):
            raise ValueError(f"{path}: not a PFM file")
        dims = f.readline().decode("ascii")
        m = re.match(r"^\s*(\d+)\s+(\d+)\s*$", dims)
        if not m:
            raise ValueError(f"{path}: malformed PFM header")
        w, h = int(m.group(1)), int(m.group(2))
        scale = float(f.readline().decode("ascii").strip())
        dtype = "<f4" if scale < 0 else ">f4"
        shape = (h, w, 3) if kind == b"PF" else (h, w)
        data = np.frombuffer(f.read(), dtype=dtype, count=int(np.prod(shape))).reshape(shape)
    return data[::-1].astype(np.float64)


def write_disparity_pfm(path, disp: DisparityMap) -> None:
    """Invalid pixels are written as +inf."""
    write_pfm(path, np.where(disp.valid, disp.data, np.inf))


def read_disparity_pfm(path) -> DisparityMap:
    data = read_pfm(path)
    return DisparityMap(np.where(np.isfinite(data), data, 0.0), np.isfinite(data))


def write_disparity_png(path, disp: DisparityMap) -> None:
    """uint16 PNG with value round(d * 256); 0 is reserved for invalid."""
    v = np.round(np.clip(disp.filled(0.0), 0.0, 65535.0 / 256.0) * 256.0).astype(np.uint16)
    v[~disp.valid] = 0
    v[disp.valid & (v == 0)] = 1
    write_png16(path, v)


def read_disparity_png(path) -> DisparityMap:
    v = read_png16(path)
    return DisparityMap(v.astype(float) / 256.0, v > 0)


def write_png16(path, data: np.ndarray) -> None:
    Image.fromarray(np.asarray(data, dtype=np.uint16)).save(path, format="PNG")


def read_png16(path) -> np.ndarray:
    return np.array(Image.open(path)).astype(np.uint16)


def write_png8(path, data: np.ndarray) -> None:
    Image.fromarray(np.asarray(data, dtype=np.uint8)).save(path, format="PNG")


def read_image(path) -> np.ndarray:
    """RGB image as float in [0, 1]."""
    img = np.asarray(Image.open(path).convert("RGB"), dtype=np.float64)
    return img / 255.0


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.round(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)


def dump_json(path, obj) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True)
    Path(path).write_text(text + "\n")


def load_json(path):
    return json.loads(Path(path).read_text())


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class PartialMarker:
    """Context manager that leaves a ``.partial`` file in ``directory`` until success."""

    def __init__(self, directory):
        self.path = Path(directory) / ".partial"

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text("incomplete\n")
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None and self.path.exists():
            os.remove(self.path)
        return False
