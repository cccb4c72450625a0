# src/semrelay/link/hec.py
"""
重要度マップに基づく圧縮と復元（HEC）。

  送信元  C1     : 重要度の高い順に ⌊(1−v1)L⌋ 要素を取り出す
  中継    C1⁻¹   : ペイロード長 K1 から v1 = 1 − K1/L を逆算し、同じマスクで元の位置へ戻す
  中継    C2     : v = 1 − (1−v1)(1−v2) で再圧縮（M2 ⊆ M1）
  宛先    C2⁻¹   : K2 から同じ規則でマスクを作り、元の位置へ戻す

並び順は「重要度の降順、同値は平坦化したときの位置 (チャネル, 行, 列) の若い順」。
3 ノードとも同じ I から同じ順序を導くので、位置情報は送らない。
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np
import torch

from semrelay.counting import floor_count
from semrelay.errors import PayloadError, ShapeError
from semrelay.tensor import DTYPE, FeatureTensor

_HEADER = struct.Struct("<4Q")


@dataclass(frozen=True)
class MaskPlan:
    mask: torch.Tensor
    keep_count: int
    threshold: float
    order: torch.Tensor

    @property
    def length(self) -> int:
        return self.mask.numel()

    @property
    def rate(self) -> float:
        return 1.0 - self.keep_count / self.length


@dataclass(frozen=True)
class CompressedPayload:
    values: torch.Tensor
    shape: tuple[int, int, int]

    def __post_init__(self) -> None:
        if self.values.dim() != 1:
            raise PayloadError(f"payload values must be a vector, got shape {tuple(self.values.shape)}")
        if len(self.shape) != 3:
            raise PayloadError(f"payload source shape must be (C2, h, w), got {self.shape}")
        if self.values.numel() > self.length:
            raise PayloadError(f"payload holds {self.values.numel()} values but L={self.length}")

    @property
    def k(self) -> int:
        return self.values.numel()

    @property
    def length(self) -> int:
        return math.prod(self.shape)

    def with_values(self, values: torch.Tensor) -> "CompressedPayload":
        return CompressedPayload(values, self.shape)

    def to_bytes(self) -> bytes:
        header = _HEADER.pack(self.k, *self.shape)
        body = np.ascontiguousarray(self.values.detach().cpu().numpy(), dtype="<f8").tobytes()
        return header + body

    @classmethod
    def from_bytes(cls, data: bytes) -> "CompressedPayload":
        if len(data) < _HEADER.size:
            raise PayloadError("payload header is truncated")
        k, c, h, w = _HEADER.unpack_from(data)
        body = data[_HEADER.size :]
        if len(body) != 8 * k:
            raise PayloadError(f"payload declares {k} values but carries {len(body) // 8}")
        values = torch.from_numpy(np.frombuffer(body, dtype="<f8").copy())
        return cls(values, (int(c), int(h), int(w)))


def combined_rate(v1: float, v2: float) -> float:
    return 1.0 - (1.0 - v1) * (1.0 - v2)


def _check_rate(v: float, name: str) -> None:
    if not 0.0 <= v < 1.0:
        raise ValueError(f"{name} must lie in [0, 1), got {v}")


def extraction_order(imp: torch.Tensor) -> torch.Tensor:
    flat = imp.detach().reshape(-1)
    # 安定ソートなので同値は平坦化位置の若い順に残る
    return torch.sort(-flat, stable=True).indices


def plan_for_count(imp: torch.Tensor, keep: int) -> MaskPlan:
    length = imp.numel()
    if not 0 <= keep <= length:
        raise PayloadError(f"keep count {keep} outside [0, {length}]")
    order = extraction_order(imp)[:keep]
    mask = torch.zeros(length, dtype=torch.bool, device=imp.device)
    mask[order] = True
    threshold = float(imp.detach().reshape(-1)[order[-1]]) if keep else math.inf
    return MaskPlan(mask=mask.reshape(imp.shape), keep_count=keep, threshold=threshold, order=order)


def build_mask(imp: torch.Tensor, v: float) -> MaskPlan:
    _check_rate(v, "compression rate")
    return plan_for_count(imp, floor_count(1.0 - v, imp.numel()))


def _check_shapes(y: torch.Tensor, imp: torch.Tensor) -> None:
    if y.shape != imp.shape:
        raise ShapeError(f"feature {tuple(y.shape)} and importance {tuple(imp.shape)} differ in shape")
    if y.dim() != 3:
        raise ShapeError(f"expected a (C2, h, w) feature, got {tuple(y.shape)}")


def _gather(y: FeatureTensor, plan: MaskPlan) -> CompressedPayload:
    values = y.reshape(-1).index_select(0, plan.order)
    return CompressedPayload(values, tuple(int(s) for s in y.shape))  # type: ignore[arg-type]


def _scatter(payload: CompressedPayload, imp: torch.Tensor) -> FeatureTensor:
    if tuple(imp.shape) != payload.shape:
        raise ShapeError(f"payload shape {payload.shape} does not match importance {tuple(imp.shape)}")
    if payload.k > imp.numel():
        raise PayloadError(f"payload length {payload.k} exceeds L={imp.numel()}")
    plan = plan_for_count(imp, payload.k)
    values = payload.values.to(DTYPE)
    flat = torch.zeros(imp.numel(), dtype=values.dtype, device=values.device)
    flat = flat.index_put((plan.order,), values)
    return flat.reshape(imp.shape)


def inferred_rate(payload: CompressedPayload) -> float:
    """受信側で使う圧縮率。ペイロード長だけから 1 − K/L を求める。"""
    return 1.0 - payload.k / payload.length


def compress_c1(y_tilde: FeatureTensor, imp: torch.Tensor, v1: float) -> tuple[CompressedPayload, MaskPlan]:
    _check_shapes(y_tilde, imp)
    plan = build_mask(imp, v1)
    return _gather(y_tilde, plan), plan


def reshape_c1_inv(s1_hat: CompressedPayload, imp: torch.Tensor) -> FeatureTensor:
    return _scatter(s1_hat, imp)


def compress_c2(
    y1_hat: FeatureTensor, imp: torch.Tensor, v1_inferred: float, v2: float
) -> tuple[CompressedPayload, MaskPlan]:
    _check_shapes(y1_hat, imp)
    _check_rate(v2, "v2")
    if not 0.0 <= v1_inferred <= 1.0:
        raise ValueError(f"inferred v1 must lie in [0, 1], got {v1_inferred}")
    v = combined_rate(v1_inferred, v2)
    plan = plan_for_count(imp, floor_count(1.0 - v, imp.numel()))
    return _gather(y1_hat, plan), plan


def reshape_c2_inv(s2_hat: CompressedPayload, imp: torch.Tensor) -> FeatureTensor:
    return _scatter(s2_hat, imp)
