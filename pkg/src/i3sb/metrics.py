"""Image quality metrics: SSIM, Haralick texture features and their normalized distance, RMSE.

Both SSIM and the Haralick functions accept an optional ``bbox=(row0, row1,
col0, col1)`` restricting the evaluation to a rectangle (half-open bounds).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor_io import ImageTensor, as_array

LOG_GUARD = 1e-12
SCALE_FLOOR = 1e-8
FEATURE_NAMES = (
    "angular_second_moment",
    "contrast",
    "correlation",
    "sum_of_squares_variance",
    "inverse_difference_moment",
    "sum_average",
    "sum_variance",
    "sum_entropy",
    "entropy",
    "difference_variance",
    "difference_entropy",
    "info_measure_correlation_1",
    "info_measure_correlation_2",
)
DEFAULT_OFFSETS = ((0, 1), (1, 0), (1, 1), (1, -1))


def _plane(img, bbox=None) -> np.ndarray:
    if isinstance(img, ImageTensor):
        if img.channels != 1:
            raise ValueError(f"expected a single-channel image, got {img.channels} channels")
        arr = as_array(img.plane)
    else:
        arr = np.asarray(img, dtype=np.float64)
    if bbox is not None:
        r0, r1, c0, c1 = bbox
        arr = arr[r0:r1, c0:c1]
    return arr


def _same_shape(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    # separable valid-mode correlation with a symmetric 1-D kernel
    k = g.size
    rows = np.lib.stride_tricks.sliding_window_view(img, k, axis=0) @ g
    return np.lib.stride_tricks.sliding_window_view(rows, k, axis=1) @ g


def ssim_map(a, b, data_range: float, win_size: int = 11, sigma: float = 1.5, bbox=None) -> np.ndarray:
    x, y = _plane(a, bbox), _plane(b, bbox)
    _same_shape(x, y)
    if data_range <= 0:
        raise ValueError("data_range must be positive")
    if min(x.shape) < win_size:
        raise ValueError(f"image {x.shape} smaller than the {win_size}x{win_size} SSIM window")
    g = gaussian_window(win_size, sigma)
    c1, c2 = (0.01 * data_range) ** 2, (0.03 * data_range) ** 2
    mx, my = _filter_valid(x, g), _filter_valid(y, g)
    vx = _filter_valid(x * x, g) - mx * mx
    vy = _filter_valid(y * y, g) - my * my
    cxy = _filter_valid(x * y, g) - mx * my
    return ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))


def ssim(a, b, data_range: float, bbox=None) -> float:
    """Mean SSIM over all fully contained 11x11 Gaussian (sigma 1.5) windows."""
    return float(np.mean(ssim_map(a, b, data_range, bbox=bbox)))


def rmse(a, b) -> float:
    x, y = as_array(a), as_array(b)
    _same_shape(x, y)
    return float(np.sqrt(np.mean((x - y) ** 2)))


@dataclass(frozen=True)
class GlcmConfig:
    levels: int = 32
    offsets: tuple = DEFAULT_OFFSETS
    window: tuple = (-1.0, 1.0)
    symmetric: bool = True

    def __post_init__(self):
        if self.levels < 2:
            raise ValueError("levels must be >= 2")
        if not self.window[0] < self.window[1]:
            raise ValueError("window min must be < max")
        object.__setattr__(self, "offsets", tuple(tuple(int(v) for v in o) for o in self.offsets))


def quantize(img: np.ndarray, cfg: GlcmConfig) -> np.ndarray:
    lo, hi = cfg.window
    rel = (np.clip(img, lo, hi) - lo) / (hi - lo)
    return np.minimum(np.floor(rel * cfg.levels).astype(np.int64), cfg.levels - 1)


def glcm(img, cfg: GlcmConfig = GlcmConfig(), bbox=None) -> np.ndarray:
    """Normalized co-occurrence matrices, shape ``(len(offsets), levels, levels)``."""
    q = quantize(_plane(img, bbox), cfg)
    H, W = q.shape
    L = cfg.levels
    mats = np.zeros((len(cfg.offsets), L, L))
    for k, (dr, dc) in enumerate(cfg.offsets):
        r0, r1 = max(0, -dr), min(H, H - dr)
        c0, c1 = max(0, -dc), min(W, W - dc)
        if r1 <= r0 or c1 <= c0:
            raise ValueError(f"offset {(dr, dc)} leaves no pixel pairs in a {H}x{W} image")
        src = q[r0:r1, c0:c1].ravel()
        dst = q[r0 + dr : r1 + dr, c0 + dc : c1 + dc].ravel()
        m = np.bincount(src * L + dst, minlength=L * L).reshape(L, L).astype(np.float64)
        if cfg.symmetric:
            m = m + m.T
        mats[k] = m / m.sum()
    return mats


def _entropy(p: np.ndarray) -> float:
    return float(-np.sum(p * np.log(np.maximum(p, LOG_GUARD))))


def haralick_features(p: np.ndarray) -> np.ndarray:
    """The 13 classic Haralick features of one normalized co-occurrence matrix (0-based gray levels)."""
    L = p.shape[0]
    i, j = np.indices((L, L))
    px, py = p.sum(axis=1), p.sum(axis=0)
    lv = np.arange(L)
    mux, muy = float(lv @ px), float(lv @ py)
    sdx = math.sqrt(max(float(((lv - mux) ** 2) @ px), 0.0))
    sdy = math.sqrt(max(float(((lv - muy) ** 2) @ py), 0.0))

    p_sum = np.bincount((i + j).ravel(), weights=p.ravel(), minlength=2 * L - 1)
    p_diff = np.bincount(np.abs(i - j).ravel(), weights=p.ravel(), minlength=L)
    ks, kd = np.arange(2 * L - 1), np.arange(L)

    asm = float(np.sum(p * p))
    contrast = float(kd**2 @ p_diff)
    if sdx * sdy > 0:
        correlation = (float(np.sum(i * j * p)) - mux * muy) / (sdx * sdy)
    else:
        correlation = 1.0
    sum_sq_var = float(np.sum((i - mux) ** 2 * p))
    idm = float(np.sum(p / (1.0 + (i - j) ** 2)))
    sum_avg = float(ks @ p_sum)
    sum_var = float(((ks - sum_avg) ** 2) @ p_sum)
    sum_ent = _entropy(p_sum)
    ent = _entropy(p)
    diff_mean = float(kd @ p_diff)
    diff_var = float(((kd - diff_mean) ** 2) @ p_diff)
    diff_ent = _entropy(p_diff)

    pxy = np.outer(px, py)
    hx, hy = _entropy(px), _entropy(py)
    hxy1 = float(-np.sum(p * np.log(np.maximum(pxy, LOG_GUARD))))
    hxy2 = _entropy(pxy)
    denom = max(hx, hy)
    imc1 = (ent - hxy1) / denom if denom > 0 else 0.0
    imc2 = math.sqrt(max(0.0, 1.0 - math.exp(-2.0 * (hxy2 - ent))))
    return np.array(
        [asm, contrast, correlation, sum_sq_var, idm, sum_avg, sum_var, sum_ent, ent, diff_var, diff_ent, imc1, imc2]
    )


def haralick(img, cfg: GlcmConfig = GlcmConfig(), bbox=None) -> np.ndarray:
    """13 Haralick features averaged over the configured offsets."""
    mats = glcm(img, cfg, bbox)
    return np.mean([haralick_features(m) for m in mats], axis=0)


def feature_distance(f_test: np.ndarray, f_ref: np.ndarray) -> float:
    """Root-mean-square of feature differences, each scaled by ``|f_ref| + 1e-8``."""
    f_test, f_ref = np.asarray(f_test, dtype=np.float64), np.asarray(f_ref, dtype=np.float64)
    scaled = np.abs(f_test - f_ref) / (np.abs(f_ref) + SCALE_FLOOR)
    # factor out the largest term so tiny differences do not underflow when squared
    top = scaled.max(initial=0.0)
    if top == 0.0 or not np.isfinite(top):
        return float(top)
    return float(top * np.sqrt(np.mean((scaled / top) ** 2)))


def haralick_distance(test, ref, cfg: GlcmConfig = GlcmConfig(), bbox=None) -> float:
    return feature_distance(haralick(test, cfg, bbox), haralick(ref, cfg, bbox))
