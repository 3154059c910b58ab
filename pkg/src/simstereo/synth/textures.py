"""Procedural solid textures evaluated at object-frame surface points.

Textures are functions of 3D position, so both stereo views see the same
albedo at a surface point regardless of viewpoint.
"""

from __future__ import annotations

import numpy as np

TEXTURE_KINDS = ("solid", "checker", "perlin", "gradient")


def _fade(t):
    return t * t * t * (t * (t * 6 - 15) + 10)


def _gradients(seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    perm = rng.permutation(256)
    g = rng.normal(size=(256, 3))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return np.concatenate([perm, perm]), g


def perlin3(p: np.ndarray, seed: int) -> np.ndarray:
    """Classic gradient noise in roughly [-1, 1] at points (N, 3)."""
    perm, grads = _gradients(seed)
    pi = np.floor(p).astype(np.int64)
    pf = p - pi
    pi &= 255
    u = _fade(pf)
    out = np.zeros(len(p))
    for dx in (0, 1):
        wx = u[:, 0] if dx else 1 - u[:, 0]
        for dy in (0, 1):
            wy = u[:, 1] if dy else 1 - u[:, 1]
            for dz in (0, 1):
                wz = u[:, 2] if dz else 1 - u[:, 2]
                h = perm[perm[perm[pi[:, 0] + dx] + pi[:, 1] + dy] + pi[:, 2] + dz]
                g = grads[h]
                off = pf - np.array([dx, dy, dz])
                out += wx * wy * wz * np.einsum("ij,ij->i", g, off)
    return out * 1.5


def fractal_noise(p: np.ndarray, seed: int, frequency: float, octaves: int) -> np.ndarray:
    total = np.zeros(len(p))
    amp, norm = 1.0, 0.0
    for o in range(octaves):
        total += amp * perlin3(p * frequency * (2 ** o), seed + o)
        norm += amp
        amp *= 0.5
    return total / norm


def evaluate(texture: dict, points: np.ndarray) -> np.ndarray:
    """Albedo in [0, 1] (N, 3) for object-frame points."""
    kind = texture["kind"]
    c1 = np.asarray(texture["colors"][0], float)
    if kind == "solid":
        return np.broadcast_to(c1, (len(points), 3)).copy()
    c2 = np.asarray(texture["colors"][1], float)
    if kind == "checker":
        cell = texture["cell"]
        parity = np.floor(points / cell).astype(np.int64).sum(axis=1) & 1
        return np.where(parity[:, None] == 1, c2, c1)
    if kind == "perlin":
        n = fractal_noise(points, texture["seed"], texture["frequency"], texture["octaves"])
        t = np.clip(0.5 + 0.5 * n * texture.get("contrast", 1.5), 0.0, 1.0)
        return c1 + t[:, None] * (c2 - c1)
    if kind == "gradient":
        d = np.asarray(texture["direction"], float)
        t = 0.5 + 0.5 * np.sin(points @ d * texture["frequency"] + texture["phase"])
        return c1 + t[:, None] * (c2 - c1)
    raise ValueError(f"unknown texture kind {kind!r}")


def random_texture(rng: np.random.Generator, kinds=TEXTURE_KINDS, weights=None, scale: float = 1.0) -> dict:
    """Random texture; ``scale`` multiplies every spatial period."""
    kind = str(rng.choice(kinds, p=weights))
    c1 = rng.uniform(0.05, 0.95, 3)
    c2 = rng.uniform(0.05, 0.95, 3)
    # keep two-tone textures visibly two-tone
    if np.abs(c1 - c2).mean() < 0.3:
        c2 = np.clip(1.0 - c1 + rng.uniform(-0.1, 0.1, 3), 0.0, 1.0)
    tex = {"kind": kind, "colors": [c1.tolist(), c2.tolist()]}
    if kind == "checker":
        tex["cell"] = float(rng.uniform(0.02, 0.08) * scale)
    elif kind == "perlin":
        tex.update(seed=int(rng.integers(1 << 31)), frequency=float(rng.uniform(4.0, 20.0) / scale),
                   octaves=int(rng.integers(1, 4)), contrast=float(rng.uniform(1.2, 2.5)))
    elif kind == "gradient":
        d = rng.normal(size=3)
        tex.update(direction=(d / np.linalg.norm(d)).tolist(), frequency=float(rng.uniform(1.0, 4.0) / scale),
                   phase=float(rng.uniform(0, 2 * np.pi)))
    return tex
