# src/semrelay/services/dataset.py
"""
学習・評価用の画像を用意する。

- ingest          : ディレクトリの PNG を読み込み、双線形で目標サイズへ縮小し [0,1] に正規化、
                    ファイル名順に N 枚ずつまとめる
- synthetic_pairs : 共有成分と個別成分をもつ滑らかな合成画像（卓上での学習・テスト用）
"""

from __future__ import annotations

import logging
import math
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image, UnidentifiedImageError

from semrelay.errors import DataError
from semrelay.tensor import DTYPE, ImageBatch, validate_image_batch

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png",)


def load_image(path: Path) -> torch.Tensor:
    """(3, H, W) の float64、値は [0,1]。"""
    with Image.open(path) as im:
        rgb = im.convert("RGB")
        arr = np.asarray(rgb, dtype=np.float64) / 255.0
    return torch.from_numpy(arr).permute(2, 0, 1).contiguous().to(DTYPE)


def resize_bilinear(img: torch.Tensor, height: int, width: int) -> torch.Tensor:
    if tuple(img.shape[-2:]) == (height, width):
        return img
    out = F.interpolate(img.unsqueeze(0), size=(height, width), mode="bilinear", align_corners=False)
    return out.squeeze(0).clamp(0.0, 1.0)


def list_images(directory: Path) -> list[Path]:
    if not directory.is_dir():
        raise DataError(f"image directory not found: {directory}")
    return sorted(p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)


def ingest(directory: Path, height: int, width: int, n: int) -> list[ImageBatch]:
    if n < 1:
        raise ValueError(f"group size must be >= 1, got {n}")
    images: list[torch.Tensor] = []
    for path in list_images(directory):
        try:
            img = load_image(path)
        except (UnidentifiedImageError, OSError, ValueError) as e:
            logger.warning("skip undecodable image %s: %s", path.name, e)
            continue
        images.append(resize_bilinear(img, height, width))

    if len(images) < n:
        raise DataError(f"{directory} holds {len(images)} usable images, need at least {n}")
    starts = range(0, len(images) - n + 1, n)
    groups = [validate_image_batch(torch.stack(images[i : i + n], dim=0)) for i in starts]
    leftover = len(images) % n
    if leftover:
        logger.info("ingest: %d trailing image(s) do not fill a group and are ignored", leftover)
    logger.info("ingest: %d images -> %d groups of %d (%dx%d)", len(images), len(groups), n, height, width)
    return groups


def _smooth_field(rng: np.random.Generator, height: int, width: int, waves: int) -> np.ndarray:
    yy, xx = np.meshgrid(np.linspace(0.0, 1.0, height), np.linspace(0.0, 1.0, width), indexing="ij")
    field = np.zeros((3, height, width))
    for c in range(3):
        for _ in range(waves):
            fy, fx = rng.uniform(0.3, 2.0, size=2)
            phase = rng.uniform(0.0, 2.0 * math.pi)
            amp = rng.uniform(0.3, 1.0)
            field[c] += amp * np.sin(2.0 * math.pi * (fy * yy + fx * xx) + phase)
    return field / math.sqrt(waves)


def synthetic_pairs(
    count: int, n: int, height: int, width: int, seed: int = 0, personal: float = 0.35
) -> list[ImageBatch]:
    """count 組の (N, 3, H, W)。組内の画像は共通の低周波成分を共有する。"""
    if count < 1 or n < 1:
        raise ValueError(f"count and n must be >= 1, got {count}, {n}")
    rng = np.random.default_rng(seed)
    groups: list[ImageBatch] = []
    for _ in range(count):
        base = _smooth_field(rng, height, width, waves=3)
        imgs = [base + personal * _smooth_field(rng, height, width, waves=2) for _ in range(n)]
        arr = 0.5 + 0.4 * np.tanh(np.stack(imgs, axis=0))
        groups.append(torch.from_numpy(arr).to(DTYPE))
    return groups
