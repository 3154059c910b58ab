"""End-to-end stereo matching: features, cost volume, aggregation, soft argmin, fusion."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

from .codec import fuse_full_res_disparity
from .stereo import (
    FEATURE_FACTOR, CostVolume, DisparityMap, FeatureConfig, aggregate_cost, build_cost_volume,
    block_mean, extract_features, full_resolution_scale, semi_global_aggregate, soft_argmin,
    to_gray,
)


@dataclass(frozen=True)
class StereoConfig:
    num_slices: int = 33
    disparity_stride: float = 2.0
    # Similarities of unit-norm descriptors live in [-1, 1]; a small temperature
    # keeps the softmax peaked enough to localize within a slice.
    temperature: float = 0.15
    softmax_window: Optional[int] = 2
    delta: float = 1.0
    kernel_size: int = 9
    kernel_kind: str = "bilateral"
    kernel_sigma: Optional[float] = 3.0
    kernel_gamma: float = 0.05
    sgm: bool = True
    sgm_p1: float = 0.05
    sgm_p2: float = 0.3
    ratio_threshold: Optional[float] = None
    census_window: int = 7
    patch_size: int = 3
    fuse_radius: int = 2
    fuse_sigma_spatial: float = 1.0
    fuse_sigma_range: float = 0.08

    def __post_init__(self):
        if self.num_slices < 1:
            raise ValueError("num_slices must be >= 1")
        if not self.disparity_stride > 0 or not self.temperature > 0 or not self.delta > 0:
            raise ValueError("stride, temperature and delta must be positive")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError("kernel_size must be a positive odd integer")

    @property
    def features(self) -> FeatureConfig:
        return FeatureConfig(census_window=self.census_window, patch_size=self.patch_size)

    @property
    def max_full_disparity(self) -> float:
        """Largest disparity representable, in full-resolution pixels."""
        return (self.num_slices - 1) * FEATURE_FACTOR

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class StereoResult:
    volume: CostVolume  # aggregated similarities
    low: DisparityMap  # soft-argmin output in slice units (stride per slice)
    low_full: DisparityMap  # quarter-resolution grid, full-resolution pixel units
    full: DisparityMap  # fused full-resolution disparity


def match(left: np.ndarray, right: np.ndarray, config: StereoConfig = StereoConfig()) -> StereoResult:
    phi_l = extract_features(left, config.features)
    phi_r = extract_features(right, config.features)
    vol = build_cost_volume(phi_l, phi_r, config.num_slices, config.disparity_stride)
    guide = block_mean(to_gray(left), FEATURE_FACTOR)
    if guide.max() > 1.0:
        guide = guide / 255.0
    vol = aggregate_cost(vol, config.kernel_size, config.kernel_kind, config.kernel_sigma, guide,
                         config.kernel_gamma)
    if config.sgm:
        vol = semi_global_aggregate(vol, config.sgm_p1, config.sgm_p2)
    low = soft_argmin(vol, config.temperature, config.ratio_threshold, config.softmax_window)
    scale = full_resolution_scale(config.disparity_stride)
    low_full = DisparityMap(low.data * scale, low.valid.copy())
    full = fuse_full_res_disparity(low_full, left, config.fuse_radius, config.fuse_sigma_spatial,
                                   config.fuse_sigma_range)
    return StereoResult(vol, low, low_full, full)


def textured_mask(image: np.ndarray, window: int = 5, threshold: float = 0.01,
                  factor: int = FEATURE_FACTOR) -> np.ndarray:
    """Full-resolution mask of pixels with texture at the matching scale.

    Local intensity standard deviation is measured on the ``factor``-times
    block-averaged image over a ``window`` x ``window`` neighbourhood.
    """
    g = to_gray(image)
    if g.max() > 1.0:
        g = g / 255.0
    H, W = g.shape
    low = block_mean(g[: H - H % factor, : W - W % factor], factor)
    m = ndimage.uniform_filter(low, window, mode="reflect")
    m2 = ndimage.uniform_filter(low * low, window, mode="reflect")
    sd = np.sqrt(np.maximum(m2 - m * m, 0.0)) > threshold
    full = np.zeros((H, W), dtype=bool)
    full[: H - H % factor, : W - W % factor] = np.repeat(np.repeat(sd, factor, axis=0), factor, axis=1)
    return full
