# src/semrelay/services/results.py
"""結果表の CSV 入出力（UTF-8、カンマ区切り、ヘッダ行あり、浮動小数は有効数字 9 桁）。"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Mapping, Sequence

import pandas as pd

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.9g"


def to_frame(rows: Sequence[Mapping[str, Any]], columns: Sequence[str] | None = None) -> pd.DataFrame:
    frame = pd.DataFrame(list(rows))
    if columns is not None:
        frame = frame.reindex(columns=list(columns))
    return frame


def write_frame(path: Path, frame: pd.DataFrame) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, encoding="utf-8")
    logger.info("wrote %d rows to %s", len(frame), path)


def write_rows(path: Path, rows: Sequence[Mapping[str, Any]], columns: Sequence[str] | None = None) -> pd.DataFrame:
    frame = to_frame(rows, columns)
    write_frame(path, frame)
    return frame


def read_rows(path: Path) -> pd.DataFrame:
    return pd.read_csv(path, encoding="utf-8")
