# src/semrelay/link/channel.py
"""
1 ホップ分の通信路。

  r = √P̄ · h · s + n,   P̄ = P / K,   h ~ N(0, d^-a),   n ~ N(0, N0)

h は送信期間を通じて一定（ブロックフェージング）。実数ガウスの振幅で、
ラベルは Rayleigh だが式どおり実数で扱う。
受信側は完全な CSI を仮定したゼロフォーシング等化で s を推定し、送信側の電力正規化を戻す。
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
import torch

from semrelay.errors import DeepFadeError, DegenerateInputError, ParameterError, StateError
from semrelay.tensor import DTYPE

logger = logging.getLogger(__name__)

DEEP_FADE_FLOOR = 1e-12


def dbm_to_watts(x: float) -> float:
    return 10.0 ** ((x - 30.0) / 10.0)


def watts_to_dbm(p: float) -> float:
    if p <= 0:
        raise ValueError(f"power must be positive, got {p}")
    return 10.0 * math.log10(p) + 30.0


def normalize_power(s: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """平均二乗が 1 になるよう割り、割った量（受信側で掛け戻す scale）も返す。"""
    if s.numel() == 0:
        raise ValueError("cannot normalize an empty vector")
    ms = torch.mean(s * s)
    if float(ms.detach()) == 0.0:
        raise DegenerateInputError("cannot normalize an all-zero vector")
    scale = torch.sqrt(ms)
    return s / scale, scale


def sample_fading(
    d: float, a: float, rng: np.random.Generator, size: int | None = None
) -> float | np.ndarray:
    if d <= 0:
        raise ValueError(f"distance must be positive, got {d}")
    if a <= 0:
        raise ValueError(f"path-loss exponent must be positive, got {a}")
    std = math.sqrt(d ** (-a))
    if size is None:
        return float(rng.normal(0.0, std))
    return rng.normal(0.0, std, size)


@dataclass(frozen=True)
class LinkParams:
    distance_m: float
    path_loss_exp: float
    noise_power_w: float
    total_power_w: float
    fading: float | None = None

    def __post_init__(self) -> None:
        for name in ("distance_m", "path_loss_exp", "noise_power_w", "total_power_w"):
            value = getattr(self, name)
            if not value > 0:
                raise ParameterError(f"{name} must be positive, got {value}")

    @classmethod
    def from_dbm(cls, distance_m: float, path_loss_exp: float, noise_dbm: float, power_dbm: float) -> "LinkParams":
        return cls(distance_m, path_loss_exp, dbm_to_watts(noise_dbm), dbm_to_watts(power_dbm))

    @property
    def gain_variance(self) -> float:
        return self.distance_m ** (-self.path_loss_exp)

    def per_symbol_power(self, k: int) -> float:
        if k <= 0:
            raise ValueError(f"payload length must be positive, got {k}")
        return self.total_power_w / k

    def with_fading(self, h: float) -> "LinkParams":
        return replace(self, fading=float(h))


def transmit(s: torch.Tensor, link: LinkParams, rng: np.random.Generator) -> torch.Tensor:
    k = s.numel()
    if k == 0:
        raise ValueError("cannot transmit an empty payload")
    if link.fading is None:
        raise StateError("link has no fading realization; call with_fading() first")
    p_bar = link.per_symbol_power(k)
    noise = rng.normal(0.0, math.sqrt(link.noise_power_w), k)
    n = torch.from_numpy(noise).to(dtype=DTYPE, device=s.device).reshape(s.shape)
    return math.sqrt(p_bar) * link.fading * s + n


def equalize(r: torch.Tensor, h: float, p_bar: float, scale: torch.Tensor | float) -> torch.Tensor:
    if abs(h) < DEEP_FADE_FLOOR:
        raise DeepFadeError(h)
    if p_bar <= 0:
        raise ParameterError(f"per-symbol power must be positive, got {p_bar}")
    return r * scale / (math.sqrt(p_bar) * h)


def average_snr_db(link: LinkParams, k: int) -> float:
    """10·log10(P̄·E[h²] / N0)。"""
    return 10.0 * math.log10(link.per_symbol_power(k) * link.gain_variance / link.noise_power_w)


def power_for_snr(snr_db: float, link: LinkParams, k: int) -> float:
    """平均 SNR が snr_db になる総送信電力 P [W]。"""
    if k <= 0:
        raise ValueError(f"payload length must be positive, got {k}")
    return k * link.noise_power_w * 10.0 ** (snr_db / 10.0) / link.gain_variance


def send(
    values: torch.Tensor, link: LinkParams, rng: np.random.Generator
) -> tuple[torch.Tensor, LinkParams]:
    """正規化→送信→等化を 1 ホップ分まとめて行う。h は rng から毎回引き直す。

    空のペイロードはそのまま返す。全要素 0 のペイロードは受信側の逆正規化で 0 に戻るので 0 を返す。
    どちらの場合も |h| が等化の下限を割れば DeepFadeError。
    """
    h = float(sample_fading(link.distance_m, link.path_loss_exp, rng))
    drawn = link.with_fading(h)
    if abs(h) < DEEP_FADE_FLOOR:
        raise DeepFadeError(h)
    if values.numel() == 0:
        return values, drawn
    if not bool(values.detach().any()):
        # 雑音系列の消費量を通常時と揃える
        rng.normal(0.0, 1.0, values.numel())
        return torch.zeros_like(values), drawn
    unit, scale = normalize_power(values)
    received = transmit(unit, drawn, rng)
    estimate = equalize(received, h, drawn.per_symbol_power(values.numel()), scale)
    if not bool(torch.isfinite(estimate).all()):
        logger.warning("non-finite equalized payload (h=%.3e)", h)
    return estimate, drawn
