# src/semrelay/counting.py
from __future__ import annotations

import math


def floor_count(fraction: float, total: int) -> int:
    """⌊fraction·total⌋。0.7*10 のような浮動小数の誤差で 1 つ落とさないよう丸めてから切り捨てる。"""
    return int(math.floor(round(fraction * total, 9)))
