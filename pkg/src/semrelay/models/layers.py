# src/semrelay/models/layers.py
"""
畳み込み・転置畳み込み・GDN の層と、ConvLayerSpec の並びから nn.Sequential を組む処理。

GDN: y_i = x_i / sqrt(β_i + Σ_j γ_ij x_j²)
β = softplus(β_raw) + 1e-6、γ = γ_raw² で再パラメータ化し、制約 β>0, γ>=0 を常に満たす。
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

from semrelay.errors import ParameterError, ShapeError
from semrelay.models.arch import Activation, ConvLayerSpec
from semrelay.tensor import DTYPE

BETA_FLOOR = 1e-6


def gdn_forward(
    x: torch.Tensor, beta: torch.Tensor, gamma: torch.Tensor, *, inverse: bool = False
) -> torch.Tensor:
    if bool((beta <= 0).any()):
        raise ParameterError("GDN beta must be strictly positive")
    if bool((gamma < 0).any()):
        raise ParameterError("GDN gamma must be non-negative")
    squeeze = x.dim() == 3
    if squeeze:
        x = x.unsqueeze(0)
    channels = x.shape[1]
    if beta.shape != (channels,) or gamma.shape != (channels, channels):
        raise ParameterError(
            f"GDN parameters {tuple(beta.shape)}/{tuple(gamma.shape)} do not match {channels} channels"
        )
    norm = F.conv2d(x * x, gamma.reshape(channels, channels, 1, 1), beta)
    y = x * torch.sqrt(norm) if inverse else x * torch.rsqrt(norm)
    return y.squeeze(0) if squeeze else y


class GDN(nn.Module):
    def __init__(self, channels: int, *, inverse: bool = False, gamma_init: float = 0.1) -> None:
        super().__init__()
        self.inverse = inverse
        # softplus(β_raw) + floor = 1 となる初期値
        beta0 = math.log(math.expm1(1.0 - BETA_FLOOR))
        self.beta_raw = nn.Parameter(torch.full((channels,), beta0, dtype=DTYPE))
        self.gamma_raw = nn.Parameter(math.sqrt(gamma_init) * torch.eye(channels, dtype=DTYPE))

    @property
    def beta(self) -> torch.Tensor:
        return F.softplus(self.beta_raw) + BETA_FLOOR

    @property
    def gamma(self) -> torch.Tensor:
        return self.gamma_raw * self.gamma_raw

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return gdn_forward(x, self.beta, self.gamma, inverse=self.inverse)


def _activation(spec: ConvLayerSpec) -> nn.Module | None:
    match spec.activation:
        case Activation.GDN:
            return GDN(spec.out_channels)
        case Activation.IGDN:
            return GDN(spec.out_channels, inverse=True)
        case Activation.RELU:
            return nn.ReLU()
        case Activation.TANH:
            return nn.Tanh()
        case _:
            return None


def build_stack(specs: list[ConvLayerSpec]) -> nn.Sequential:
    layers: list[nn.Module] = []
    for spec in specs:
        if spec.transposed:
            conv: nn.Conv2d | nn.ConvTranspose2d = nn.ConvTranspose2d(
                spec.in_channels,
                spec.out_channels,
                spec.kernel_size,
                stride=spec.stride,
                padding=spec.padding,
                output_padding=spec.output_padding,
            )
        else:
            conv = nn.Conv2d(
                spec.in_channels, spec.out_channels, spec.kernel_size, stride=spec.stride, padding=spec.padding
            )
        # 重みは入力の二乗平均を保つ正規分布、バイアスは 0
        nn.init.kaiming_normal_(conv.weight, nonlinearity="linear")
        nn.init.zeros_(conv.bias)
        layers.append(conv)
        act = _activation(spec)
        if act is not None:
            layers.append(act)
    return nn.Sequential(*layers).to(DTYPE)


def run_stack(stack: nn.Sequential, x: torch.Tensor, expect: tuple[int, int, int], what: str) -> torch.Tensor:
    """(C, H, W) と (B, C, H, W) の両方を受け付け、末尾 3 次元を expect と照合してから流す。"""
    if x.dim() not in (3, 4) or tuple(x.shape[-3:]) != expect:
        raise ShapeError(f"{what} expects (..., {expect[0]}, {expect[1]}, {expect[2]}), got {tuple(x.shape)}")
    if x.dim() == 3:
        return stack(x.unsqueeze(0)).squeeze(0)
    return stack(x)
