"""Cost-volume stereo matching with hand-crafted features.

The learned feature extractor is replaced by a census + normalized patch
descriptor at quarter resolution. Everything downstream of the features (the
shifted dot-product volume, aggregation, soft argmin and the Huber disparity
loss with its analytic gradient) works on plain numpy arrays.

Units: slice ``i`` of a cost volume compares left feature column ``j`` with
right feature column ``j - i``. ``soft_argmin`` reports ``stride * E[i]``;
``to_full_resolution`` converts that to full-resolution image pixels.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from .errors import EmptyTarget, ShapeError

FEATURE_FACTOR = 4


@dataclass
class FeatureVolume:
    data: np.ndarray  # (C, H, W)

    @property
    def shape(self):
        return self.data.shape


@dataclass
class CostVolume:
    data: np.ndarray  # (Cc, H, W) similarity scores
    disparity_stride: float = 2.0

    @property
    def num_slices(self) -> int:
        return self.data.shape[0]

    @property
    def max_disparity(self) -> float:
        return self.disparity_stride * (self.num_slices - 1)

    def zero_region(self) -> np.ndarray:
        """Boolean mask of the entries forced to zero (slice i, columns < i)."""
        c, _, w = self.data.shape
        cols = np.arange(w)[None, None, :]
        return np.broadcast_to(cols < np.arange(c)[:, None, None], self.data.shape)


@dataclass
class DisparityMap:
    data: np.ndarray
    valid: Optional[np.ndarray] = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.valid is None:
            self.valid = np.isfinite(self.data)
        else:
            self.valid = np.asarray(self.valid, dtype=bool) & np.isfinite(self.data)

    @property
    def shape(self):
        return self.data.shape

    def filled(self, value: float = 0.0) -> np.ndarray:
        return np.where(self.valid, self.data, value)


@dataclass(frozen=True)
class FeatureConfig:
    census_window: int = 7
    patch_size: int = 3
    census_weight: float = 1.0
    patch_weight: float = 1.0
    factor: int = FEATURE_FACTOR


def to_gray(image: np.ndarray) -> np.ndarray:
    img = np.asarray(image, dtype=float)
    if img.ndim == 3:
        img = img[..., :3] @ np.array([0.299, 0.587, 0.114])
    return img


def block_mean(img: np.ndarray, factor: int) -> np.ndarray:
    h, w = img.shape[:2]
    return img.reshape(h // factor, factor, w // factor, factor, *img.shape[2:]).mean(axis=(1, 3))


def _neighbour_stack(img: np.ndarray, size: int) -> np.ndarray:
    r = size // 2
    padded = np.pad(img, r, mode="edge")
    h, w = img.shape
    out = []
    for dy in range(size):
        for dx in range(size):
            out.append(padded[dy:dy + h, dx:dx + w])
    return np.stack(out)


def census_channels(gray: np.ndarray, window: int = 7) -> np.ndarray:
    """Ternary census: sign(neighbour - center) for every non-center offset."""
    stack = _neighbour_stack(gray, window)
    center = (window * window) // 2
    diff = np.delete(stack, center, axis=0) - gray[None]
    return np.sign(diff)


def patch_channels(gray: np.ndarray, size: int = 3) -> np.ndarray:
    """Zero-mean, unit-norm intensity patch around every pixel."""
    stack = _neighbour_stack(gray, size)
    stack = stack - stack.mean(axis=0, keepdims=True)
    norm = np.sqrt((stack * stack).sum(axis=0, keepdims=True))
    return np.divide(stack, norm, out=np.zeros_like(stack), where=norm > 1e-9)


def extract_features(image: np.ndarray, config: FeatureConfig = FeatureConfig()) -> FeatureVolume:
    img = np.asarray(image)
    h, w = img.shape[:2]
    f = config.factor
    if h % f or w % f:
        raise ShapeError(f"image size {w}x{h} is not divisible by {f}")
    gray = block_mean(to_gray(img), f)
    census = census_channels(gray, config.census_window)
    census /= np.sqrt(census.shape[0])
    patch = patch_channels(gray, config.patch_size)
    feats = np.concatenate([config.census_weight * census, config.patch_weight * patch])
    norm = np.sqrt((feats * feats).sum(axis=0, keepdims=True))
    feats = np.divide(feats, norm, out=np.zeros_like(feats), where=norm > 1e-12)
    return FeatureVolume(feats)


def build_cost_volume(phi_l: FeatureVolume, phi_r: FeatureVolume, num_slices: int = 33,
                      disparity_stride: float = 2.0) -> CostVolume:
    """Shifted dot products between left and right feature volumes.

    ``out[i, :, j] = sum_c phi_l[c, :, j] * phi_r[c, :, j - i]`` for ``j >= i``
    and zero for ``j < i``. Channels are accumulated in order so the result is
    reproducible bit for bit.
    """
    L = np.asarray(phi_l.data, dtype=float)
    R = np.asarray(phi_r.data, dtype=float)
    if L.shape != R.shape:
        raise ShapeError(f"feature volumes differ in shape: {L.shape} vs {R.shape}")
    if num_slices < 1:
        raise ValueError("num_slices must be >= 1")
    c, h, w = L.shape
    # shifted[k, i] is R[k] moved right by i columns with zeros filled in
    padded = np.concatenate([np.zeros((c, h, num_slices - 1)), R], axis=2)
    shifted = sliding_window_view(padded, w, axis=2)[:, :, ::-1, :].transpose(0, 2, 1, 3)
    out = np.zeros((num_slices, h, w))
    buf = np.empty((num_slices, h, w))
    for k in range(c):
        np.multiply(L[k][None], shifted[k], out=buf)
        out += buf
    # 0 * negative gives -0.0; adding it to +0.0 keeps +0.0, so the zero region is exact
    return CostVolume(out, disparity_stride)


def _kernel(size: int, kind: str, sigma: Optional[float]) -> np.ndarray:
    if kind == "box":
        return np.ones(size)
    if kind == "gaussian":
        s = sigma if sigma is not None else size / 4.0
        x = np.arange(size) - size // 2
        return np.exp(-0.5 * (x / s) ** 2)
    raise ValueError(f"unknown kernel kind {kind!r}")


def aggregate_cost(vol: CostVolume, kernel_size: int = 1, kind: str = "box",
                   sigma: Optional[float] = None, guide: Optional[np.ndarray] = None,
                   gamma: float = 0.05) -> CostVolume:
    """Spatial smoothing of every slice, renormalized over the valid region.

    ``kind`` is ``box`` or ``gaussian`` (separable), or ``bilateral``, which
    additionally weights neighbours by ``exp(-|guide_p - guide_q| / gamma)``
    using a quarter-resolution intensity ``guide``. The zero-padded columns
    of each slice neither contribute to nor receive smoothed values, so they
    stay exactly zero.
    """
    if kernel_size < 1 or kernel_size % 2 == 0:
        raise ValueError("kernel_size must be a positive odd integer")
    if kernel_size == 1:
        return CostVolume(vol.data.copy(), vol.disparity_stride)
    valid = ~vol.zero_region()
    if kind == "bilateral":
        return _aggregate_bilateral(vol, valid, kernel_size // 2, sigma, guide, gamma)
    k = _kernel(kernel_size, kind, sigma)
    mask = valid.astype(float)
    num = np.where(valid, vol.data, 0.0)
    for axis in (1, 2):
        num = ndimage.correlate1d(num, k, axis=axis, mode="constant", cval=0.0)
        mask = ndimage.correlate1d(mask, k, axis=axis, mode="constant", cval=0.0)
    out = np.zeros_like(vol.data)
    np.divide(num, mask, out=out, where=valid & (mask > 0))
    return CostVolume(out, vol.disparity_stride)


def _aggregate_bilateral(vol: CostVolume, valid: np.ndarray, r: int, sigma: Optional[float],
                         guide: Optional[np.ndarray], gamma: float) -> CostVolume:
    if guide is None:
        raise ValueError("bilateral aggregation needs a guide image")
    guide = np.asarray(guide, dtype=float)
    _, h, w = vol.data.shape
    if guide.shape != (h, w):
        raise ShapeError(f"guide {guide.shape} does not match volume {(h, w)}")
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    s = sigma if sigma is not None else (2 * r + 1) / 3.0
    gp = np.pad(guide, r, mode="edge")
    sp = np.pad(np.where(valid, vol.data, 0.0), ((0, 0), (r, r), (r, r)))
    vp = np.pad(valid.astype(float), ((0, 0), (r, r), (r, r)))
    num = np.zeros(vol.data.shape)
    den = np.zeros(vol.data.shape)
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            win = (slice(r + dy, r + dy + h), slice(r + dx, r + dx + w))
            wt = np.exp(-np.abs(gp[win] - guide) / gamma - (dx * dx + dy * dy) / (2.0 * s * s))
            num += wt * sp[(slice(None),) + win]
            den += wt * vp[(slice(None),) + win]
    out = np.zeros_like(vol.data)
    np.divide(num, den, out=out, where=valid & (den > 0))
    return CostVolume(out, vol.disparity_stride)


def _path_costs(cost: np.ndarray, p1: float, p2: float, reverse: bool) -> np.ndarray:
    """Dynamic-programming path costs along the first axis of (N, D, M)."""
    if reverse:
        cost = cost[::-1]
    out = np.empty_like(cost)
    prev = cost[0].copy()
    out[0] = prev
    for k in range(1, len(cost)):
        low = prev.min(axis=0, keepdims=True)
        nb = np.full_like(prev, np.inf)  # best of the two adjacent slices
        nb[1:] = prev[:-1]
        nb[:-1] = np.minimum(nb[:-1], prev[1:])
        best = np.minimum(np.minimum(prev, nb + p1), low + p2)
        prev = cost[k] + best - low
        out[k] = prev
    return out[::-1] if reverse else out


def semi_global_aggregate(vol: CostVolume, p1: float = 0.05, p2: float = 0.3) -> CostVolume:
    """Four-direction semi-global smoothing of a similarity volume.

    Matching cost is ``1 - score`` (1 in the zero-padded region). Path costs
    add ``p1`` for a one-slice change between neighbours and ``p2`` for larger
    jumps. The returned scores are ``1 - mean path cost``; zero-padded entries
    are reset to 0.
    """
    if not (0 <= p1 <= p2):
        raise ValueError("penalties must satisfy 0 <= p1 <= p2")
    zero = vol.zero_region()
    cost = np.where(zero, 1.0, 1.0 - vol.data)
    total = np.zeros_like(cost)
    along_w = np.transpose(cost, (2, 0, 1))  # (W, D, H)
    along_h = np.transpose(cost, (1, 0, 2))  # (H, D, W)
    for reverse in (False, True):
        total += np.transpose(_path_costs(along_w, p1, p2, reverse), (1, 2, 0))
        total += np.transpose(_path_costs(along_h, p1, p2, reverse), (1, 0, 2))
    out = np.where(zero, 0.0, 1.0 - total / 4.0)
    return CostVolume(out, vol.disparity_stride)


def _softmax(scores: np.ndarray, temperature: float) -> np.ndarray:
    z = scores / temperature
    z = z - z.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


def peak_ratio(scores: np.ndarray, exclude: int = 1) -> np.ndarray:
    """Best score over the best score outside ``exclude`` slices of the argmax.

    Returns ``inf`` where no competing slice has a positive score and 0 where
    the best score itself is not positive.
    """
    n = scores.shape[0]
    best_i = scores.argmax(axis=0)
    best = np.take_along_axis(scores, best_i[None], axis=0)[0]
    idx = np.arange(n)[:, None, None]
    near = np.abs(idx - best_i[None]) <= exclude
    second = np.where(near, -np.inf, scores).max(axis=0) if n > 2 * exclude + 1 else np.full(best.shape, -np.inf)
    ratio = np.full(best.shape, np.inf)
    pos = second > 0
    ratio[pos] = best[pos] / second[pos]
    ratio[best <= 0] = 0.0
    return ratio


def soft_argmin(vol: CostVolume, temperature: float = 1.0,
                ratio_threshold: Optional[float] = None, window: Optional[int] = None) -> DisparityMap:
    """Expected disparity under ``softmax(scores / temperature)`` over slices.

    Scores are similarities, so this is a soft argmax over the volume. With
    ``ratio_threshold`` set, pixels whose best-to-runner-up score ratio falls
    below it are marked invalid. With ``window`` set, the softmax only spans
    slices within ``window`` of the per-pixel best slice, which stops distant
    secondary matches from pulling the estimate.
    """
    if not temperature > 0:
        raise ValueError("temperature must be positive")
    scores = vol.data
    if window is not None:
        near = np.abs(np.arange(vol.num_slices)[:, None, None] - scores.argmax(axis=0)[None]) <= window
        scores = np.where(near, scores, -np.inf)
    w = _softmax(scores, temperature)
    idx = np.arange(vol.num_slices, dtype=float)[:, None, None]
    disp = vol.disparity_stride * (w * idx).sum(axis=0)
    disp = np.clip(disp, 0.0, vol.max_disparity)
    valid = np.ones(disp.shape, dtype=bool)
    if ratio_threshold is not None:
        valid = peak_ratio(vol.data) >= ratio_threshold
    return DisparityMap(disp, valid)


def huber(e: np.ndarray, delta: float = 1.0) -> np.ndarray:
    a = np.abs(e)
    return np.where(a <= delta, 0.5 * e * e, delta * (a - 0.5 * delta))


def huber_disparity_loss(pred: DisparityMap, target: DisparityMap, delta: float = 1.0) -> float:
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {pred.shape} and target {target.shape} differ")
    if not delta > 0:
        raise ValueError("delta must be positive")
    m = target.valid
    if not m.any():
        raise EmptyTarget("target has no valid pixels")
    e = pred.data[m] - target.data[m]
    return float(huber(e, delta).mean())


def loss_gradient(vol: CostVolume, target: DisparityMap, temperature: float = 1.0,
                  delta: float = 1.0) -> np.ndarray:
    """Gradient of ``huber_disparity_loss(soft_argmin(vol), target)`` w.r.t. ``vol.data``."""
    w = _softmax(vol.data, temperature)
    idx = np.arange(vol.num_slices, dtype=float)[:, None, None]
    mean_idx = (w * idx).sum(axis=0)
    pred = vol.disparity_stride * mean_idx
    m = target.valid
    n = int(m.sum())
    if n == 0:
        raise EmptyTarget("target has no valid pixels")
    e = np.where(m, pred - np.where(m, target.data, 0.0), 0.0)
    dl = np.clip(e, -delta, delta) / n
    # d pred / d score_k = stride / T * w_k * (k - E[k])
    return dl[None] * (vol.disparity_stride / temperature) * w * (idx - mean_idx[None])


def downsample_disparity(full: DisparityMap, factor: int) -> DisparityMap:
    """Block median over valid pixels; values stay in full-resolution units."""
    h, w = full.shape
    if factor < 1 or h % factor or w % factor:
        raise ShapeError(f"factor {factor} does not divide {w}x{h}")
    if factor == 1:
        return DisparityMap(full.data.copy(), full.valid.copy())
    x = np.where(full.valid, full.data, np.nan)
    blocks = x.reshape(h // factor, factor, w // factor, factor).transpose(0, 2, 1, 3)
    blocks = blocks.reshape(h // factor, w // factor, factor * factor)
    valid = np.isfinite(blocks).any(axis=2)
    out = np.zeros(valid.shape)
    if valid.any():
        out[valid] = np.nanmedian(blocks[valid], axis=1)
    return DisparityMap(out, valid)


def full_resolution_scale(disparity_stride: float, factor: int = FEATURE_FACTOR) -> float:
    """Full-resolution pixels per unit of ``soft_argmin`` output.

    One slice is one feature column, i.e. ``factor`` image pixels, while
    ``soft_argmin`` counts ``disparity_stride`` per slice.
    """
    return factor / disparity_stride


def to_full_resolution(disp: DisparityMap, disparity_stride: float,
                       factor: int = FEATURE_FACTOR) -> DisparityMap:
    """Rescale quarter-resolution slice units to full-resolution image pixels."""
    return DisparityMap(disp.data * full_resolution_scale(disparity_stride, factor), disp.valid.copy())


def to_slice_units(disp: DisparityMap, disparity_stride: float,
                   factor: int = FEATURE_FACTOR) -> DisparityMap:
    return DisparityMap(disp.data / full_resolution_scale(disparity_stride, factor), disp.valid.copy())
