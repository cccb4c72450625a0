# src/semrelay/services/metrics.py
"""
画質と帯域の指標: MSE / PSNR / MS-SSIM / CBR。

MS-SSIM は輝度（BT.601）上で 11x11・σ=1.5 のガウス窓を valid 畳み込みし、
2x2 平均で縮小しながら最大 5 スケールを掛け合わせる。スケール数 M < 5 のときは
標準の重みの先頭 M 個を和が 1 になるよう正規化して使う。
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
from scipy.signal import convolve2d

from semrelay.errors import ShapeError
from semrelay.models.arch import ArchConfig

MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
WINDOW_SIZE = 11
WINDOW_SIGMA = 1.5
K1 = 0.01
K2 = 0.03
LUMA = (0.299, 0.587, 0.114)

ArrayLike = torch.Tensor | np.ndarray


def _np(x: ArrayLike) -> np.ndarray:
    if isinstance(x, torch.Tensor):
        return x.detach().cpu().numpy().astype(np.float64, copy=False)
    return np.asarray(x, dtype=np.float64)


def _pair(a: ArrayLike, b: ArrayLike) -> tuple[np.ndarray, np.ndarray]:
    x, y = _np(a), _np(b)
    if x.shape != y.shape:
        raise ShapeError(f"shapes differ: {x.shape} vs {y.shape}")
    return x, y


def mse(a: ArrayLike, b: ArrayLike) -> float:
    x, y = _pair(a, b)
    return float(np.mean((x - y) ** 2))


def psnr_from_mse(value: float, max_val: float) -> float:
    if max_val <= 0:
        raise ValueError(f"max_val must be positive, got {max_val}")
    if value == 0:
        return math.inf
    return 10.0 * math.log10(max_val * max_val / value)


def psnr(a: ArrayLike, b: ArrayLike, max_val: float = 1.0) -> float:
    return psnr_from_mse(mse(a, b), max_val)


def gaussian_window(size: int = WINDOW_SIZE, sigma: float = WINDOW_SIGMA) -> np.ndarray:
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(r * r) / (2.0 * sigma * sigma))
    g /= g.sum()
    return np.outer(g, g)


def luminance(img: np.ndarray) -> np.ndarray:
    """(3, H, W) -> (H, W)。"""
    if img.ndim != 3 or img.shape[0] != 3:
        raise ShapeError(f"expected an RGB image (3, H, W), got {img.shape}")
    return LUMA[0] * img[0] + LUMA[1] * img[1] + LUMA[2] * img[2]


def max_scales(height: int, width: int) -> int:
    """最も粗いスケールでも 11x11 以上残る最大のスケール数（5 以下）。"""
    m = 0
    while m < len(MS_SSIM_WEIGHTS) and min(height, width) // (2**m) >= WINDOW_SIZE:
        m += 1
    return m


def scale_weights(m: int) -> tuple[float, ...]:
    head = MS_SSIM_WEIGHTS[:m]
    total = sum(head)
    return tuple(w / total for w in head)


def _ssim_terms(x: np.ndarray, y: np.ndarray, window: np.ndarray, data_range: float) -> tuple[float, float]:
    c1 = (K1 * data_range) ** 2
    c2 = (K2 * data_range) ** 2

    def filt(z: np.ndarray) -> np.ndarray:
        return convolve2d(z, window, mode="valid")

    mu_x, mu_y = filt(x), filt(y)
    sxx = filt(x * x) - mu_x * mu_x
    syy = filt(y * y) - mu_y * mu_y
    sxy = filt(x * y) - mu_x * mu_y
    lum = (2.0 * mu_x * mu_y + c1) / (mu_x * mu_x + mu_y * mu_y + c1)
    cs = (2.0 * sxy + c2) / (sxx + syy + c2)
    return float(lum.mean()), float(cs.mean())


def _downsample(z: np.ndarray) -> np.ndarray:
    h, w = (z.shape[0] // 2) * 2, (z.shape[1] // 2) * 2
    z = z[:h, :w]
    return 0.25 * (z[0::2, 0::2] + z[1::2, 0::2] + z[0::2, 1::2] + z[1::2, 1::2])


def ms_ssim_gray(x: np.ndarray, y: np.ndarray, scales: int | None = None, data_range: float = 1.0) -> float:
    if x.shape != y.shape or x.ndim != 2:
        raise ShapeError(f"expected matching 2-D planes, got {x.shape} and {y.shape}")
    feasible = max_scales(*x.shape)
    m = feasible if scales is None else scales
    if m < 1 or m > feasible:
        raise ValueError(f"image {x.shape} too small for {m} MS-SSIM scale(s); at most {feasible} fit")

    weights = scale_weights(m)
    window = gaussian_window()
    value = 1.0
    for j in range(m):
        lum, cs = _ssim_terms(x, y, window, data_range)
        value *= max(cs, 0.0) ** weights[j]
        if j == m - 1:
            value *= max(lum, 0.0) ** weights[j]
        else:
            x, y = _downsample(x), _downsample(y)
    return min(max(value, 0.0), 1.0)


def ms_ssim(a: ArrayLike, b: ArrayLike, scales: int | None = None, data_range: float = 1.0) -> float:
    """(N, 3, H, W) または (3, H, W)。バッチは画像ごとの値を平均する。"""
    x, y = _pair(a, b)
    if x.ndim == 3:
        x, y = x[None], y[None]
    if x.ndim != 4:
        raise ShapeError(f"expected (N, 3, H, W), got {x.shape}")
    values = [ms_ssim_gray(luminance(xi), luminance(yi), scales, data_range) for xi, yi in zip(x, y)]
    return float(np.mean(values))


def _batch_dims(batch: ArrayLike | Sequence[int]) -> tuple[int, int, int, int]:
    shape = tuple(batch.shape) if isinstance(batch, (torch.Tensor, np.ndarray)) else tuple(batch)
    if len(shape) != 4:
        raise ShapeError(f"expected an (N, 3, H, W) batch, got {shape}")
    return tuple(int(s) for s in shape)  # type: ignore[return-value]


def cbr(k: int, batch: ArrayLike | Sequence[int]) -> float:
    """実数 2 個で 1 チャネル使用とみなし (K/2) / (N·3·H·W)。"""
    if k <= 0:
        raise ValueError(f"transmitted count must be positive, got {k}")
    n, c, h, w = _batch_dims(batch)
    return (k / 2.0) / (n * c * h * w)


def v1_for_cbr(target: float, arch: ArchConfig) -> float:
    """送信元の CBR が target になる v1。"""
    source = arch.num_images * 3 * arch.image_height * arch.image_width
    v1 = 1.0 - 2.0 * target * source / arch.payload_length
    if not 0.0 <= v1 < 1.0:
        raise ValueError(f"CBR {target} is unreachable: needs v1={v1:.4f} outside [0, 1)")
    return v1


@dataclass(frozen=True)
class QualityReport:
    mse: float
    psnr: float
    ms_ssim: float
    cbr: float

    @classmethod
    def measure(
        cls, original: ArrayLike, restored: ArrayLike, k: int, max_val: float = 1.0, scales: int | None = None
    ) -> "QualityReport":
        value = mse(original, restored)
        # [0,1] の画素を max_val のスケールで測る
        scaled = value * max_val * max_val
        return cls(
            mse=scaled,
            psnr=psnr_from_mse(scaled, max_val),
            ms_ssim=ms_ssim(original, restored, scales),
            cbr=cbr(k, _np(original).shape),
        )
