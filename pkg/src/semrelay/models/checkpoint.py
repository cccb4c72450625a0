# src/semrelay/models/checkpoint.py
"""
チェックポイント形式 "SEMRELAY1"。

  magic      b"SEMRELAY1"
  u32        メタデータ長 / UTF-8 JSON（構成情報）
  u32        配列数
  各配列:   u16 名前長 / 名前 / u8 次元数 / u64 x 次元 / float64 LE の値

すべてリトルエンディアン。保存→読込でビット単位に一致する。
"""

from __future__ import annotations

import json
import logging
import struct
from pathlib import Path
from typing import Any, BinaryIO

import numpy as np

from semrelay.errors import DataError

logger = logging.getLogger(__name__)

MAGIC = b"SEMRELAY1"


def _read_exact(fh: BinaryIO, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise DataError("checkpoint is truncated")
    return data


def write_arrays(path: Path, arrays: dict[str, np.ndarray], metadata: dict[str, Any] | None = None) -> None:
    meta = json.dumps(metadata or {}, ensure_ascii=False, sort_keys=True).encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(meta)))
        fh.write(meta)
        fh.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays.items():
            values = np.asarray(arr, dtype="<f8")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", values.ndim))
            fh.write(struct.pack(f"<{values.ndim}Q", *values.shape))
            fh.write(values.tobytes(order="C"))
    logger.info("checkpoint saved: %s (%d arrays)", path, len(arrays))


def read_arrays(path: Path) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    with path.open("rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise DataError(f"{path} is not a SEMRELAY1 checkpoint")
        (meta_len,) = struct.unpack("<I", _read_exact(fh, 4))
        metadata = json.loads(_read_exact(fh, meta_len).decode("utf-8"))
        (count,) = struct.unpack("<I", _read_exact(fh, 4))
        arrays: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read_exact(fh, 2))
            name = _read_exact(fh, name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", _read_exact(fh, 1))
            shape = struct.unpack(f"<{ndim}Q", _read_exact(fh, 8 * ndim)) if ndim else ()
            size = int(np.prod(shape)) if shape else 1
            raw = _read_exact(fh, 8 * size)
            arrays[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    logger.info("checkpoint loaded: %s (%d arrays)", path, len(arrays))
    return arrays, metadata


def is_checkpoint(path: Path) -> bool:
    with path.open("rb") as fh:
        return fh.read(len(MAGIC)) == MAGIC
