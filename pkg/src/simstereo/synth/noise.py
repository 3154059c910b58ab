"""Depth-sensor noise model: multiplicative/additive noise plus ellipse dropouts."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import ndimage


@dataclass(frozen=True)
class DepthNoiseParams:
    sigma_mult: float = 0.01
    sigma_add: float = 0.002  # meters
    ellipses: Tuple[int, int] = (5, 15)  # inclusive count range
    area: Tuple[float, float] = (100.0, 300.0)  # pixels
    max_aspect: float = 3.0
    edge_bias: float = 0.9  # probability that a center is drawn from the edge set
    edge_threshold: float = 0.05  # relative depth step marking an edge


def depth_edges(depth: np.ndarray, threshold: float = 0.05, radius: int = 0) -> np.ndarray:
    """Pixels whose 4-neighbourhood contains a relative depth jump above ``threshold``."""
    z = np.asarray(depth, float)
    valid = z > 0
    edge = np.zeros(z.shape, dtype=bool)
    for axis in (0, 1):
        a = np.take(z, range(0, z.shape[axis] - 1), axis=axis)
        b = np.take(z, range(1, z.shape[axis]), axis=axis)
        va = np.take(valid, range(0, z.shape[axis] - 1), axis=axis)
        vb = np.take(valid, range(1, z.shape[axis]), axis=axis)
        jump = (va != vb) | (np.abs(a - b) > threshold * np.maximum(np.minimum(a, b), 1e-9))
        sl_a = [slice(None)] * 2
        sl_b = [slice(None)] * 2
        sl_a[axis] = slice(0, -1)
        sl_b[axis] = slice(1, None)
        edge[tuple(sl_a)] |= jump
        edge[tuple(sl_b)] |= jump
    if radius > 0:
        edge = ndimage.binary_dilation(edge, iterations=radius)
    return edge


def ellipse_mask(shape, center, axes, angle) -> np.ndarray:
    H, W = shape
    mask = np.zeros((H, W), dtype=bool)
    r = max(axes)
    u0, u1 = max(int(np.floor(center[0] - r)), 0), min(int(np.ceil(center[0] + r)) + 1, W)
    v0, v1 = max(int(np.floor(center[1] - r)), 0), min(int(np.ceil(center[1] + r)) + 1, H)
    if u0 >= u1 or v0 >= v1:
        return mask
    v, u = np.mgrid[v0:v1, u0:u1]
    du, dv = u - center[0], v - center[1]
    c, s = np.cos(angle), np.sin(angle)
    x = c * du + s * dv
    y = -s * du + c * dv
    mask[v0:v1, u0:u1] = (x / axes[0]) ** 2 + (y / axes[1]) ** 2 <= 1.0
    return mask


def sample_dropouts(depth: np.ndarray, rng: np.random.Generator,
                    params: DepthNoiseParams = DepthNoiseParams()):
    """Dropout ellipses as (center (u, v), semi-axes (a, b), angle) tuples."""
    z = np.asarray(depth, float)
    lo, hi = params.ellipses
    n = int(rng.integers(lo, hi + 1)) if hi > 0 else 0
    H, W = z.shape
    edge_pix = np.argwhere(depth_edges(z, params.edge_threshold)) if n else np.empty((0, 2))
    out = []
    for _ in range(n):
        if len(edge_pix) and rng.random() < params.edge_bias:
            v, u = edge_pix[rng.integers(len(edge_pix))]
            u, v = float(u), float(v)
        else:
            u, v = float(rng.uniform(0, W)), float(rng.uniform(0, H))
        area = rng.uniform(*params.area)
        aspect = rng.uniform(1.0, params.max_aspect)
        a = np.sqrt(area * aspect / np.pi)
        b = area / (np.pi * a)
        out.append(((u, v), (a, b), float(rng.uniform(0, np.pi))))
    return out


def inject_depth_noise(depth: np.ndarray, rng: np.random.Generator,
                       params: DepthNoiseParams = DepthNoiseParams()) -> np.ndarray:
    """Noisy copy of a metric depth map; dropped pixels are 0."""
    z = np.asarray(depth, float)
    valid = z > 0
    out = z.copy()
    if params.sigma_mult > 0 or params.sigma_add > 0:
        noise_m = rng.normal(0.0, params.sigma_mult, z.shape) if params.sigma_mult > 0 else 0.0
        noise_a = rng.normal(0.0, params.sigma_add, z.shape) if params.sigma_add > 0 else 0.0
        out = z * (1.0 + noise_m) + noise_a
        out = np.where(valid, np.maximum(out, 0.0), 0.0)
    for center, axes, angle in sample_dropouts(z, rng, params):
        out[ellipse_mask(z.shape, center, axes, angle)] = 0.0
    return out
