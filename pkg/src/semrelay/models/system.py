# src/semrelay/models/system.py
"""
潜在変換・JSCC・ハイパー符号化の全パラメータをまとめたモデル本体と、その保存・復元。
"""

from __future__ import annotations

from pathlib import Path
from typing import Any

import numpy as np
import torch
from torch import nn

from semrelay.errors import ShapeError
from semrelay.models.arch import ArchConfig
from semrelay.models.checkpoint import read_arrays, write_arrays
from semrelay.models.hyperprior import HyperPrior
from semrelay.models.latent_codec import LatentCodec


class SemanticRelayModel(nn.Module):
    def __init__(self, arch: ArchConfig) -> None:
        super().__init__()
        self.arch = arch
        self.codec = LatentCodec(arch)
        self.hyper = HyperPrior(arch)

    @classmethod
    def create(cls, arch: ArchConfig, seed: int = 0) -> "SemanticRelayModel":
        # 初期値は seed だけで決まり、グローバル乱数状態は汚さない
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            return cls(arch)

    def num_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def save(self, path: Path, extra: dict[str, Any] | None = None) -> None:
        arrays = {name: t.detach().cpu().numpy() for name, t in self.state_dict().items()}
        metadata = {"arch": self.arch.to_dict(), **(extra or {})}
        write_arrays(path, arrays, metadata)

    @classmethod
    def load(cls, path: Path, expect: ArchConfig | None = None) -> "SemanticRelayModel":
        arrays, metadata = read_arrays(path)
        arch = ArchConfig.from_dict(metadata.get("arch", {}))
        if expect is not None and arch != expect:
            raise ShapeError(f"checkpoint architecture {arch} does not match configured {expect}")
        model = cls(arch)
        state = model.state_dict()
        missing = set(state) - set(arrays)
        if missing:
            raise ShapeError(f"checkpoint lacks arrays: {sorted(missing)}")
        model.load_state_dict({k: torch.from_numpy(np.asarray(arrays[k])) for k in state})
        return model
