# tests/test_checkpoint.py
"""SEMRELAY1 チェックポイントの保存と読み込み。"""

import numpy as np
import pytest
import torch

from semrelay.errors import DataError, ShapeError
from semrelay.models.arch import ArchConfig
from semrelay.models.checkpoint import MAGIC, is_checkpoint, read_arrays, write_arrays
from semrelay.models.system import SemanticRelayModel


def test_model_roundtrip_is_bit_exact(tmp_path, desk_arch):
    m = SemanticRelayModel.create(desk_arch, seed=11)
    path = tmp_path / "m.semrelay"
    m.save(path, extra={"steps": 3})
    loaded = SemanticRelayModel.load(path)
    assert loaded.arch == desk_arch
    for (na, a), (nb, b) in zip(m.state_dict().items(), loaded.state_dict().items()):
        assert na == nb
        assert torch.equal(a, b)


def test_file_layout(tmp_path):
    path = tmp_path / "a.bin"
    write_arrays(path, {"w": np.arange(6, dtype=np.float64).reshape(2, 3)}, {"k": 1})
    raw = path.read_bytes()
    assert raw.startswith(MAGIC)
    assert is_checkpoint(path)
    arrays, meta = read_arrays(path)
    assert meta == {"k": 1}
    assert np.array_equal(arrays["w"], np.arange(6, dtype=np.float64).reshape(2, 3))
    # 値は float64 リトルエンディアンで末尾に並ぶ
    assert raw[-48:] == np.arange(6, dtype="<f8").tobytes()


def test_scalar_array_roundtrip(tmp_path):
    path = tmp_path / "s.bin"
    view = np.arange(6.0).reshape(2, 3).T
    write_arrays(path, {"s": np.array(2.5), "t": view})
    arrays, _ = read_arrays(path)
    assert arrays["s"].shape == () and float(arrays["s"]) == 2.5
    assert arrays["t"].shape == (3, 2) and np.array_equal(arrays["t"], view)


def test_rejects_foreign_and_truncated_files(tmp_path):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"NOTACKPT")
    with pytest.raises(DataError):
        read_arrays(bad)
    good = tmp_path / "good.bin"
    write_arrays(good, {"w": np.ones(4)})
    trunc = tmp_path / "trunc.bin"
    trunc.write_bytes(good.read_bytes()[:-3])
    with pytest.raises(DataError):
        read_arrays(trunc)


def test_missing_file(tmp_path):
    with pytest.raises(DataError):
        read_arrays(tmp_path / "nope.bin")


def test_architecture_mismatch(tmp_path, desk_arch):
    path = tmp_path / "m.semrelay"
    SemanticRelayModel.create(desk_arch).save(path)
    with pytest.raises(ShapeError):
        SemanticRelayModel.load(path, expect=ArchConfig(scheme="hem"))
