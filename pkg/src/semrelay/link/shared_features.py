# src/semrelay/link/shared_features.py
"""
複数画像の潜在特徴から共有サブ空間を取り出す。

- pearson_abs / pairwise_min_rho : チャネルごとの |ピアソン相関|（N>2 は全ペアの最小値）
- partition                      : 相関の大きい ⌊γ_p·C⌋ チャネルを共有側へ
- merge                          : [X1p, Xs, X2p, ..., XNp] の順に連結（Xs は共有チャネルの平均）
- split_combine                  : 宛先で merge の並びを解いて N 枚分の潜在特徴に戻す

宛先は共有チャネルの位置を受け取らない。ChannelPartition.canonical が
(C, C1) だけで決まる並び（個別チャネル→共有チャネル）を与える。
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import torch

from semrelay.counting import floor_count
from semrelay.errors import ShapeError
from semrelay.tensor import DTYPE, FeatureTensor, concat_channels, mean_channels


def pearson_abs(x1: Sequence[float] | torch.Tensor, x2: Sequence[float] | torch.Tensor) -> float:
    a = torch.as_tensor(x1, dtype=DTYPE).reshape(-1)
    b = torch.as_tensor(x2, dtype=DTYPE).reshape(-1)
    if a.numel() != b.numel():
        raise ValueError(f"vectors differ in length: {a.numel()} vs {b.numel()}")
    if a.numel() < 2:
        raise ValueError("pearson_abs needs at least two samples")
    return float(_pearson_rows(a.unsqueeze(0), b.unsqueeze(0))[0])


def _pearson_rows(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """(C, K) 同士の行ごとの |ρ|。分散 0 の行は 0。"""
    da = a - a.mean(dim=1, keepdim=True)
    db = b - b.mean(dim=1, keepdim=True)
    cov = (da * db).sum(dim=1)
    var_a = (da * da).sum(dim=1)
    var_b = (db * db).sum(dim=1)
    denom = torch.sqrt(var_a * var_b)
    safe = torch.where(denom > 0, denom, torch.ones_like(denom))
    rho = torch.where(denom > 0, torch.abs(cov) / safe, torch.zeros_like(denom))
    return torch.clamp(rho, 0.0, 1.0)


def channel_pearson(x1: FeatureTensor, x2: FeatureTensor) -> torch.Tensor:
    if x1.shape != x2.shape or x1.dim() != 3:
        raise ShapeError(f"latents must share a (C, H, W) shape, got {tuple(x1.shape)} and {tuple(x2.shape)}")
    c = x1.shape[0]
    if x1[0].numel() < 2:
        raise ValueError("each channel needs at least two elements")
    with torch.no_grad():
        return _pearson_rows(x1.detach().reshape(c, -1), x2.detach().reshape(c, -1))


def pairwise_min_rho(latents: Sequence[FeatureTensor]) -> torch.Tensor:
    if len(latents) < 2:
        raise ValueError(f"pairwise_min_rho needs at least two latents, got {len(latents)}")
    shape = tuple(latents[0].shape)
    for t in latents:
        if tuple(t.shape) != shape:
            raise ShapeError(f"latent shapes differ: {tuple(t.shape)} vs {shape}")
    rhos = [channel_pearson(a, b) for a, b in itertools.combinations(latents, 2)]
    return torch.stack(rhos, dim=0).min(dim=0).values


@dataclass(frozen=True)
class ChannelPartition:
    channels: int
    shared_idx: tuple[int, ...]
    personal_idx: tuple[int, ...]

    def __post_init__(self) -> None:
        s, p = set(self.shared_idx), set(self.personal_idx)
        if s & p:
            raise ValueError(f"shared and personal indices overlap: {sorted(s & p)}")
        if s | p != set(range(self.channels)) or len(self.shared_idx) + len(self.personal_idx) != self.channels:
            raise ValueError(f"indices do not cover 0..{self.channels - 1} exactly once")
        if list(self.shared_idx) != sorted(self.shared_idx) or list(self.personal_idx) != sorted(self.personal_idx):
            raise ValueError("partition indices must be sorted ascending")

    @property
    def num_shared(self) -> int:
        return len(self.shared_idx)

    @property
    def num_personal(self) -> int:
        return len(self.personal_idx)

    def merged_channels(self, n: int) -> int:
        return n * self.num_personal + self.num_shared

    @classmethod
    def canonical(cls, channels: int, num_shared: int) -> "ChannelPartition":
        """宛先側の並び。前半が個別チャネル、後半が共有チャネル。"""
        if not 0 <= num_shared <= channels:
            raise ValueError(f"num_shared={num_shared} outside [0, {channels}]")
        split = channels - num_shared
        return cls(channels, tuple(range(split, channels)), tuple(range(split)))

    @classmethod
    def personal_only(cls, channels: int) -> "ChannelPartition":
        return cls.canonical(channels, 0)


def partition(rho: Sequence[float] | torch.Tensor, gamma_p: float) -> ChannelPartition:
    if not 0.0 < gamma_p < 1.0:
        raise ValueError(f"gamma_p must lie in (0, 1), got {gamma_p}")
    values = [float(v) for v in torch.as_tensor(rho, dtype=DTYPE).reshape(-1)]
    channels = len(values)
    c1 = floor_count(gamma_p, channels)
    # 同値は小さいチャネル番号を優先
    ranked = sorted(range(channels), key=lambda c: (-values[c], c))
    shared = tuple(sorted(ranked[:c1]))
    personal = tuple(sorted(ranked[c1:]))
    return ChannelPartition(channels, shared, personal)


def _take(t: torch.Tensor, idx: tuple[int, ...]) -> torch.Tensor:
    index = torch.tensor(idx, dtype=torch.long, device=t.device)
    return t.index_select(-3, index)


def merge(latents: Sequence[FeatureTensor], part: ChannelPartition) -> FeatureTensor:
    if not latents:
        raise ValueError("merge needs at least one latent")
    shape = tuple(latents[0].shape)
    for t in latents:
        if tuple(t.shape) != shape:
            raise ShapeError(f"latent shapes differ: {tuple(t.shape)} vs {shape}")
    if shape[-3] != part.channels:
        raise ShapeError(f"partition covers {part.channels} channels, latents have {shape[-3]}")

    personal = [_take(t, part.personal_idx) for t in latents]
    blocks: list[torch.Tensor] = [personal[0]]
    if part.num_shared:
        blocks.append(mean_channels([_take(t, part.shared_idx) for t in latents]))
    blocks.extend(personal[1:])
    return concat_channels([b for b in blocks if b.shape[-3] > 0])


def split_combine(s_hat: FeatureTensor, part: ChannelPartition, n: int) -> list[FeatureTensor]:
    c2 = part.merged_channels(n)
    if s_hat.shape[-3] != c2:
        raise ShapeError(f"merged tensor has {s_hat.shape[-3]} channels, expected N(C-C1)+C1={c2}")
    p, c1 = part.num_personal, part.num_shared

    # merge の並び: X1p | Xs | X2p | ... | XNp
    starts = [0] + [p + c1 + (i - 1) * p for i in range(1, n)]
    shared = s_hat.narrow(-3, p, c1)
    order = list(part.personal_idx) + list(part.shared_idx)
    inverse = torch.argsort(torch.tensor(order, dtype=torch.long, device=s_hat.device))

    out: list[FeatureTensor] = []
    for start in starts:
        personal = s_hat.narrow(-3, start, p)
        stacked = torch.cat([personal, shared], dim=-3)
        out.append(stacked.index_select(-3, inverse))
    return out
