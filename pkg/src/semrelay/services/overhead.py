# src/semrelay/services/overhead.py
"""
宛先までに送る付加情報の要素数（共有チャネル位置と重要度行列）を閉形式で数える。

  PC-HEM : 位置 0、重要度 C2·h·w（C2 = N(C−C1)+C1）
  ED-HEM : 位置 ⌊γ_p·C⌋·h·w（要素単位）、重要度は PC-HEM と同じ幅
  HEM    : 位置 0、重要度 N·C·h·w
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable

import pandas as pd

from semrelay.counting import floor_count
from semrelay.services.results import to_frame

SCHEMES = ("pc-hem", "ed-hem", "hem")
FEATURE_SIZES = ((64, 128), (32, 64), (16, 32))

OVERHEAD_COLUMNS = ["scheme", "num_images", "channels", "gamma_p", "height", "width",
                    "shared_index_elements", "importance_elements"]


def _check(scheme: str, *counts: int) -> None:
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    if any(c < 0 for c in counts):
        raise ValueError(f"counts must be non-negative, got {counts}")


def shared_index_count(scheme: str, c: int, gamma_p: float, h: int, w: int) -> int:
    _check(scheme, c, h, w)
    if scheme == "ed-hem":
        return floor_count(gamma_p, c) * h * w
    return 0


def importance_count(scheme: str, n: int, c: int, gamma_p: float, h: int, w: int) -> int:
    _check(scheme, n, c, h, w)
    if scheme == "hem" or n == 1:
        return n * c * h * w
    c1 = floor_count(gamma_p, c)
    return (n * (c - c1) + c1) * h * w


@dataclass(frozen=True)
class OverheadReport:
    scheme: str
    num_images: int
    channels: int
    gamma_p: float
    height: int
    width: int
    shared_index_elements: int
    importance_elements: int

    @classmethod
    def compute(cls, scheme: str, n: int, c: int, gamma_p: float, h: int, w: int) -> "OverheadReport":
        return cls(
            scheme, n, c, gamma_p, h, w,
            shared_index_count(scheme, c, gamma_p, h, w),
            importance_count(scheme, n, c, gamma_p, h, w),
        )


def overhead_table(
    channels: Iterable[int],
    gamma_p: float = 0.5,
    sizes: Iterable[tuple[int, int]] = FEATURE_SIZES,
    image_counts: Iterable[int] = (2, 4),
    schemes: Iterable[str] = SCHEMES,
) -> pd.DataFrame:
    channels, sizes, image_counts, schemes = list(channels), list(sizes), list(image_counts), list(schemes)
    rows = [
        asdict(OverheadReport.compute(s, n, c, gamma_p, h, w))
        for s in schemes
        for n in image_counts
        for h, w in sizes
        for c in channels
    ]
    return to_frame(rows, OVERHEAD_COLUMNS)
