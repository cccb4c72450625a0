# src/semrelay/models/hyperprior.py
"""
ハイパープライオリ・エントロピーモデル。

  Z = h_a(Y)                          (hyper_encode)
  σ = softplus(h_s(Z~)) + 1e-6        (hyper_decode)
  P(y~|σ) = (N(0,σ²) * U(-1/2,1/2))(y~) = Φ((y~+½)/σ) − Φ((y~−½)/σ)
  P(z~)   = ロジスティック分布 * U(-1/2,1/2) をチャネルごとに因子化
  I = −log2 P(y~|σ)                  (importance)

尤度は 2^-50 で下から抑え、自己情報量が常に有限になるようにする。
"""

from __future__ import annotations

import math
from typing import Literal

import torch
import torch.nn.functional as F
from torch import nn

from semrelay.errors import ParameterError, ShapeError
from semrelay.models.arch import ArchConfig
from semrelay.models.layers import build_stack, run_stack
from semrelay.tensor import DTYPE

LIKELIHOOD_FLOOR = 2.0**-50
SCALE_FLOOR = 1e-6

QuantMode = Literal["train", "test"]


def quantize(t: torch.Tensor, mode: QuantMode, rng: torch.Generator | None = None) -> torch.Tensor:
    """train: 一様ノイズを加える（勾配はそのまま通る）。test: 最近接整数へ丸める（偶数丸め）。"""
    if mode == "train":
        noise = torch.rand(t.shape, generator=rng, dtype=t.dtype, device=t.device) - 0.5
        return t + noise
    if mode == "test":
        return torch.round(t)
    raise ValueError(f"unknown quantization mode {mode!r}")


def likelihood_y(y_tilde: torch.Tensor | float, sigma: torch.Tensor | float) -> torch.Tensor:
    y = torch.as_tensor(y_tilde, dtype=DTYPE)
    s = torch.as_tensor(sigma, dtype=DTYPE)
    if bool((s <= 0).any()):
        raise ParameterError("sigma must be strictly positive")
    # |y| で対称化して上側の裾での桁落ちを避ける
    v = torch.abs(y)
    upper = torch.special.ndtr((0.5 - v) / s)
    lower = torch.special.ndtr((-0.5 - v) / s)
    return torch.clamp(upper - lower, min=LIKELIHOOD_FLOOR)


def prior_z(z_tilde: torch.Tensor | float, loc: torch.Tensor | float, scale: torch.Tensor | float) -> torch.Tensor:
    z = torch.as_tensor(z_tilde, dtype=DTYPE)
    mu = torch.as_tensor(loc, dtype=DTYPE)
    s = torch.as_tensor(scale, dtype=DTYPE)
    if bool((s <= 0).any()):
        raise ParameterError("prior scale must be strictly positive")
    # ロジスティック分布も μ について対称なので、likelihood_y と同じく |z - μ| で下側の裾に寄せる
    v = torch.abs(z - mu)
    p = torch.sigmoid((0.5 - v) / s) - torch.sigmoid((-0.5 - v) / s)
    return torch.clamp(p, min=LIKELIHOOD_FLOOR)


def importance(y_tilde: torch.Tensor, sigma: torch.Tensor) -> torch.Tensor:
    if y_tilde.shape != sigma.shape:
        raise ShapeError(f"importance needs matching shapes, got {tuple(y_tilde.shape)} and {tuple(sigma.shape)}")
    return -torch.log2(likelihood_y(y_tilde, sigma))


class HyperPrior(nn.Module):
    def __init__(self, arch: ArchConfig) -> None:
        super().__init__()
        self.arch = arch
        self.h_a = build_stack(arch.hyper_analysis_specs())
        self.h_s = build_stack(arch.hyper_synthesis_specs())
        hc = arch.hyper_channels
        self.prior_loc = nn.Parameter(torch.zeros(hc, dtype=DTYPE))
        # softplus(raw) + floor ≈ 1
        self.prior_scale_raw = nn.Parameter(torch.full((hc,), math.log(math.expm1(1.0 - SCALE_FLOOR)), dtype=DTYPE))

    @property
    def prior_scale(self) -> torch.Tensor:
        return F.softplus(self.prior_scale_raw) + SCALE_FLOOR

    def hyper_encode(self, y: torch.Tensor) -> torch.Tensor:
        h, w = self.arch.latent_hw
        return run_stack(self.h_a, y, (self.arch.merged_channels, h, w), "hyper_encode")

    def hyper_decode(self, z_tilde: torch.Tensor) -> torch.Tensor:
        h, w = self.arch.hyper_hw
        raw = run_stack(self.h_s, z_tilde, (self.arch.hyper_channels, h, w), "hyper_decode")
        return F.softplus(raw) + SCALE_FLOOR

    def prior_likelihood(self, z_tilde: torch.Tensor) -> torch.Tensor:
        loc = self.prior_loc.reshape(-1, 1, 1)
        scale = self.prior_scale.reshape(-1, 1, 1)
        return prior_z(z_tilde, loc, scale)
