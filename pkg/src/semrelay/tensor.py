# src/semrelay/tensor.py
"""
特徴テンソルの共通操作。

FeatureTensor は (C, H, W) の float64 torch.Tensor、ImageBatch は (N, 3, H, W)。
チャネル単位の連結・平均・平坦化だけをここに置き、上位モジュールはこれを組み合わせる。
"""

from __future__ import annotations

from typing import Sequence, TypeAlias

import torch

from semrelay.errors import ShapeError

FeatureTensor: TypeAlias = torch.Tensor
ImageBatch: TypeAlias = torch.Tensor

DTYPE = torch.float64


def as_feature(data: object, *, check_finite: bool = True) -> FeatureTensor:
    t = torch.as_tensor(data, dtype=DTYPE)
    if t.dim() != 3:
        raise ShapeError(f"feature tensor must be (C, H, W), got shape {tuple(t.shape)}")
    if check_finite and not bool(torch.isfinite(t).all()):
        raise ValueError("feature tensor contains NaN or Inf")
    return t


def validate_image_batch(batch: ImageBatch) -> ImageBatch:
    if batch.dim() != 4 or batch.shape[1] != 3:
        raise ShapeError(f"image batch must be (N, 3, H, W), got {tuple(batch.shape)}")
    if batch.shape[0] < 1:
        raise ShapeError("image batch is empty")
    if bool((batch < 0).any()) or bool((batch > 1).any()):
        raise ValueError("image values must lie in [0, 1]")
    return batch


def flatten_channel(t: FeatureTensor, c: int) -> torch.Tensor:
    # 行優先で走査するので長さは K = H*W
    channels = t.shape[0]
    if not 0 <= c < channels:
        raise IndexError(f"channel index {c} out of range for {channels} channels")
    return t[c].reshape(-1)


def unflatten_channel(v: torch.Tensor, height: int, width: int) -> torch.Tensor:
    if v.numel() != height * width:
        raise ShapeError(f"cannot reshape {v.numel()} values into {height}x{width}")
    return v.reshape(height, width)


def concat_channels(parts: Sequence[FeatureTensor]) -> FeatureTensor:
    if not parts:
        raise ValueError("concat_channels needs at least one part")
    hw = tuple(parts[0].shape[-2:])
    for p in parts:
        if tuple(p.shape[-2:]) != hw:
            raise ShapeError(f"spatial dims differ: {tuple(p.shape[-2:])} vs {hw}")
    if len(parts) == 1:
        return parts[0]
    return torch.cat(list(parts), dim=-3)


def channel_boundaries(parts: Sequence[FeatureTensor]) -> list[int]:
    """concat_channels の結果を元の部品へ切り戻すための境界。"""
    bounds = [0]
    for p in parts:
        bounds.append(bounds[-1] + p.shape[-3])
    return bounds


def mean_channels(parts: Sequence[FeatureTensor]) -> FeatureTensor:
    if not parts:
        raise ValueError("mean_channels needs at least one part")
    shape = tuple(parts[0].shape)
    for p in parts:
        if tuple(p.shape) != shape:
            raise ShapeError(f"shapes differ: {tuple(p.shape)} vs {shape}")
    if len(parts) == 1:
        return parts[0]
    # 先頭からの差分で平均を取る。全要素が等しい入力では先頭と完全一致する
    base = parts[0]
    offsets = torch.stack([p - base for p in parts[1:]], dim=0)
    return base + offsets.sum(dim=0) / len(parts)
