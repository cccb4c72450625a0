# tests/conftest.py
"""テスト共通のフィクスチャ。"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
import torch
from PIL import Image

from semrelay.models.arch import ArchConfig
from semrelay.models.system import SemanticRelayModel
from semrelay.services.config import SystemConfig, build_config
from semrelay.services.dataset import synthetic_pairs
from semrelay.services.training import TrainResult, train


@pytest.fixture(autouse=True)
def semrelay_home(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> Path:
    """チェックポイント履歴をテストごとの一時ディレクトリへ向ける。"""
    home = tmp_path / "home"
    monkeypatch.setenv("SEMRELAY_HOME", str(home))
    return home


@pytest.fixture
def tiny_arch() -> ArchConfig:
    # 学習対象パラメータが 500 個未満になる最小構成
    return ArchConfig(
        image_height=32,
        image_width=32,
        latent_channels=2,
        lt_widths=(1, 1, 1),
        jscc_hidden=1,
        hyper_channels=1,
    )


@pytest.fixture
def desk_arch() -> ArchConfig:
    return ArchConfig.desk()


@pytest.fixture
def desk_cfg(tmp_path: Path) -> SystemConfig:
    return build_config({"paths.output_dir": str(tmp_path / "runs")})


@pytest.fixture
def tiny_cfg(tmp_path: Path) -> SystemConfig:
    return build_config(
        {
            "arch.image_height": 32,
            "arch.image_width": 32,
            "arch.latent_channels": 2,
            "arch.lt_widths": [1, 1, 1],
            "arch.jscc_hidden": 1,
            "arch.hyper_channels": 1,
            "train.synthetic_groups": 2,
            "paths.output_dir": str(tmp_path / "runs"),
        }
    )


@pytest.fixture(scope="session")
def toy_training(tmp_path_factory: pytest.TempPathFactory) -> tuple[SystemConfig, list[torch.Tensor], TrainResult]:
    """卓上構成を 200 ステップ学習したもの。slow テストで共用する。"""
    cfg = build_config({"train.max_steps": 200, "paths.output_dir": str(tmp_path_factory.mktemp("toy"))})
    groups = synthetic_pairs(16, 2, 32, 64, seed=0)
    result = train(SemanticRelayModel.create(cfg.arch, seed=0), groups, cfg, progress=False)
    return cfg, groups, result


@pytest.fixture
def gen() -> torch.Generator:
    g = torch.Generator()
    g.manual_seed(1234)
    return g


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def write_png(path: Path, array: np.ndarray) -> Path:
    """(H, W, 3) の uint8 配列を PNG として書く。"""
    Image.fromarray(array.astype(np.uint8)).save(path)
    return path


@pytest.fixture
def png_dir(tmp_path: Path) -> Path:
    d = tmp_path / "images"
    d.mkdir()
    rng = np.random.default_rng(7)
    for i in range(4):
        write_png(d / f"img_{i:02d}.png", rng.integers(0, 256, size=(40, 72, 3)))
    return d
