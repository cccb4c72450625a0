# tests/test_training.py
"""損失関数・勾配・学習ループ。"""

import math

import numpy as np
import pytest
import torch

from semrelay.errors import DataError
from semrelay.models.system import SemanticRelayModel
from semrelay.services.dataset import synthetic_pairs
from semrelay.services.pipeline import RngStreams, TransmissionSettings, evaluate_groups
from semrelay.services.training import dataset_loss, distortion, loss_terms, rate_loss, total_loss, train
from semrelay.tensor import DTYPE


def _group(cfg, seed=3):
    a = cfg.arch
    return synthetic_pairs(1, a.num_images, a.image_height, a.image_width, seed=seed)[0]


def test_rate_loss_of_half_likelihoods():
    ly = torch.full((10,), 0.5, dtype=DTYPE)
    lz = torch.ones(0, dtype=DTYPE)
    assert float(rate_loss(ly, lz)) == pytest.approx(10 * math.log(2.0), abs=1e-12)


def test_rate_loss_matches_elementwise_sum(rng):
    ly = rng.uniform(1e-6, 1.0, size=(3, 4, 5))
    lz = rng.uniform(1e-6, 1.0, size=(2, 1, 2))
    brute = 0.0
    for v in list(ly.reshape(-1)) + list(lz.reshape(-1)):
        brute -= math.log(float(v))
    got = float(rate_loss(torch.from_numpy(ly), torch.from_numpy(lz)))
    assert got == pytest.approx(brute, abs=1e-10)


def test_distortion_uses_eight_bit_scale():
    a = torch.zeros(1, 3, 2, 2, dtype=DTYPE)
    b = torch.full((1, 3, 2, 2), 1.0 / 255.0, dtype=DTYPE)
    assert float(distortion(a, b)) == pytest.approx(12.0)


def test_loss_weights_select_terms(tiny_cfg, tiny_arch):
    model = SemanticRelayModel.create(tiny_arch, seed=1)
    group = _group(tiny_cfg)
    settings = TransmissionSettings.for_training(tiny_cfg)
    eta = tiny_cfg.train.eta
    only_d = loss_terms(model, group, 0.0, eta, settings, RngStreams.derive(0, 1))
    assert float(only_d.total) == float(eta * only_d.distortion)
    only_r = loss_terms(model, group, 0.5, 0.0, settings, RngStreams.derive(0, 1))
    assert float(only_r.total) == float(0.5 * only_r.rate_nats)
    assert only_r.rate_bits == pytest.approx(float(only_r.rate_nats) / math.log(2.0))


def test_gradients_match_finite_differences(tiny_cfg, tiny_arch):
    cfg = tiny_cfg.with_values({"train.noise_dbm": -150.0})
    model = SemanticRelayModel.create(tiny_arch, seed=2)
    assert model.num_parameters() <= 500
    group = _group(cfg)
    settings = TransmissionSettings.for_training(cfg)

    def loss() -> float:
        with torch.no_grad():
            terms = loss_terms(model, group, cfg.train.lam, cfg.train.eta, settings, RngStreams.derive(5, 0))
        return float(terms.total)

    terms, grads = total_loss(model, group, cfg, RngStreams.derive(5, 0))
    step = 1e-4
    tol = 1e-3
    # 中心差分の丸め誤差は |L|·eps/step 程度。それより小さい勾配は差分では測れない
    roundoff = abs(float(terms.total)) * float(np.finfo(np.float64).eps) / step
    floor = max(1e-6, 10.0 * roundoff / tol)
    worst = 0.0
    for name, p in model.named_parameters():
        flat = p.data.view(-1)
        analytic = grads.params[name].reshape(-1)
        for i in range(flat.numel()):
            original = float(flat[i])
            flat[i] = original + step
            up = loss()
            flat[i] = original - step
            down = loss()
            flat[i] = original
            numeric = (up - down) / (2 * step)
            a = float(analytic[i])
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst = max(worst, err)
    assert worst <= tol


def test_zero_learning_rate_keeps_parameters(tiny_cfg, tiny_arch):
    cfg = tiny_cfg.with_values({"train.learning_rate": 0.0, "train.max_steps": 2})
    model = SemanticRelayModel.create(tiny_arch, seed=4)
    before = {k: v.clone() for k, v in model.state_dict().items()}
    groups = synthetic_pairs(2, 2, 32, 32, seed=1)
    train(model, groups, cfg, progress=False)
    for k, v in model.state_dict().items():
        assert torch.equal(v, before[k])


def test_training_is_deterministic(tiny_cfg, tiny_arch, tmp_path):
    cfg = tiny_cfg.with_values({"train.max_steps": 4})
    groups = synthetic_pairs(2, 2, 32, 32, seed=1)
    a = train(SemanticRelayModel.create(tiny_arch, seed=4), groups, cfg, progress=False, curve_path=tmp_path / "a.csv")
    b = train(SemanticRelayModel.create(tiny_arch, seed=4), groups, cfg, progress=False, curve_path=tmp_path / "b.csv")
    assert [r.total for r in a.curve] == [r.total for r in b.curve]
    assert len(a.curve) == 4
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_training_needs_data(tiny_cfg, tiny_arch):
    with pytest.raises(DataError):
        train(SemanticRelayModel.create(tiny_arch), [], tiny_cfg, progress=False)


def test_smoothed_curve(tiny_cfg, tiny_arch):
    cfg = tiny_cfg.with_values({"train.max_steps": 3})
    result = train(SemanticRelayModel.create(tiny_arch), synthetic_pairs(3, 2, 32, 32), cfg, progress=False)
    assert result.smoothed(10) == [r.total for r in result.curve]
    assert len(result.smoothed(2)) == 2


def test_step_count_follows_epochs_or_max_steps(tiny_cfg, tiny_arch):
    groups = synthetic_pairs(4, 2, 32, 32, seed=1)
    by_epochs = tiny_cfg.with_values({"train.epochs": 2, "train.groups_per_step": 2})
    assert len(train(SemanticRelayModel.create(tiny_arch), groups, by_epochs, progress=False).curve) == 4
    by_steps = by_epochs.with_values({"train.max_steps": 5})
    assert len(train(SemanticRelayModel.create(tiny_arch), groups, by_steps, progress=False).curve) == 5


def test_single_group_step_records_its_loss(tiny_cfg, tiny_arch):
    cfg = tiny_cfg.with_values({"train.groups_per_step": 1, "train.max_steps": 1, "train.learning_rate": 0.0})
    group = _group(cfg)
    result = train(SemanticRelayModel.create(tiny_arch, seed=4), [group], cfg, progress=False)
    terms = loss_terms(
        SemanticRelayModel.create(tiny_arch, seed=4), group, cfg.train.lam, cfg.train.eta,
        TransmissionSettings.for_training(cfg), RngStreams.derive(cfg.train.seed, 1, 0, 0),
    )
    assert result.curve[0].total == float(terms.total)
    assert result.start_loss == result.end_loss


def test_dataset_loss_is_repeatable(tiny_cfg, tiny_arch):
    model = SemanticRelayModel.create(tiny_arch, seed=2)
    groups = synthetic_pairs(3, 2, 32, 32, seed=6)
    first = dataset_loss(model, groups, tiny_cfg)
    assert first == dataset_loss(model, groups, tiny_cfg)
    assert first > 0 and math.isfinite(first)
    with pytest.raises(DataError):
        dataset_loss(model, [], tiny_cfg)


@pytest.mark.slow
def test_toy_training_reduces_loss(toy_training):
    cfg, groups, result = toy_training
    assert len(result.curve) == 200
    assert result.end_loss <= 0.5 * result.start_loss
    smooth = result.smoothed(10)
    assert smooth[-1] < smooth[0]
    psnr = np.mean([evaluate_groups(result.model, [g], cfg, 0, bypass_channel=True).psnr for g in groups])
    assert psnr >= 20.0
