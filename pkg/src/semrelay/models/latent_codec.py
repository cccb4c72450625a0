# src/semrelay/models/latent_codec.py
"""
潜在変換 LT_e / 潜在逆変換 LT_d と JSCC 符号化器 A_e / 復号器 A_d。

入力は (C, H, W) 単体でも (B, C, H, W) のバッチでもよい。形状は ArchConfig と突き合わせて検査する。
"""

from __future__ import annotations

import torch
from torch import nn

from semrelay.errors import ShapeError
from semrelay.models.arch import ArchConfig
from semrelay.models.layers import build_stack, run_stack


class LatentCodec(nn.Module):
    def __init__(self, arch: ArchConfig) -> None:
        super().__init__()
        self.arch = arch
        self.lt_e = build_stack(arch.latent_transform_specs())
        self.a_e = build_stack(arch.jscc_specs())
        self.a_d = build_stack(arch.jscc_specs())
        self.lt_d = build_stack(arch.latent_inverse_specs())

    def latent_transform(self, img: torch.Tensor) -> torch.Tensor:
        a = self.arch
        if img.dim() >= 3 and (img.shape[-2] % 8 or img.shape[-1] % 8):
            raise ShapeError(f"image dims {tuple(img.shape[-2:])} must be divisible by 8")
        return run_stack(self.lt_e, img, (3, a.image_height, a.image_width), "latent_transform")

    def latent_inverse(self, lat: torch.Tensor) -> torch.Tensor:
        a = self.arch
        h, w = a.latent_hw
        out = run_stack(self.lt_d, lat, (a.latent_channels, h, w), "latent_inverse")
        # Tanh 出力を画素範囲 [0,1] へ
        return (out + 1.0) * 0.5

    def jscc_encode(self, s: torch.Tensor) -> torch.Tensor:
        h, w = self.arch.latent_hw
        return run_stack(self.a_e, s, (self.arch.merged_channels, h, w), "jscc_encode")

    def jscc_decode(self, y: torch.Tensor) -> torch.Tensor:
        h, w = self.arch.latent_hw
        return run_stack(self.a_d, y, (self.arch.merged_channels, h, w), "jscc_decode")
