# tests/test_hyperprior.py
"""ハイパープライオリ: 量子化・尤度・事前分布・重要度。"""

import math

import pytest
import torch
from scipy import integrate
from scipy.stats import norm

from semrelay.errors import ParameterError, ShapeError
from semrelay.models.hyperprior import LIKELIHOOD_FLOOR, HyperPrior, importance, likelihood_y, prior_z, quantize
from semrelay.tensor import DTYPE

GRID = torch.arange(-400, 401, dtype=DTYPE)


def test_quantize_test_mode_rounds_half_to_even():
    t = torch.tensor([0.4, 0.6, -1.5, 2.5], dtype=DTYPE)
    assert quantize(t, "test").tolist() == [0.0, 1.0, -2.0, 2.0]


def test_quantize_train_mode_stays_within_half(gen):
    t = torch.randn(1000, dtype=DTYPE)
    q = quantize(t, "train", gen)
    assert bool(((q - t).abs() <= 0.5).all())


def test_quantize_train_mode_is_seeded():
    t = torch.zeros(50, dtype=DTYPE)
    g1, g2 = torch.Generator(), torch.Generator()
    g1.manual_seed(9)
    g2.manual_seed(9)
    assert torch.equal(quantize(t, "train", g1), quantize(t, "train", g2))


def test_quantize_train_mode_passes_gradient(gen):
    t = torch.randn(5, dtype=DTYPE, requires_grad=True)
    quantize(t, "train", gen).sum().backward()
    assert torch.equal(t.grad, torch.ones(5, dtype=DTYPE))


def test_likelihood_center_bin_matches_integration():
    expected, _ = integrate.quad(norm.pdf, -0.5, 0.5)
    assert likelihood_y(0.0, 1.0).item() == pytest.approx(expected, abs=1e-12)
    assert likelihood_y(0.0, 1.0).item() == pytest.approx(0.3829, abs=1e-4)


@pytest.mark.parametrize("scale", [0.1, 1.0, 10.0])
def test_likelihood_is_normalized(scale):
    total = likelihood_y(GRID, torch.full_like(GRID, scale)).sum().item()
    # 0.1 では裾が下限値 2^-50 に張り付くので、その分だけ許容する
    assert total == pytest.approx(1.0, abs=1e-9 + GRID.numel() * LIKELIHOOD_FLOOR)


def test_likelihood_wide_sigma_asymptote():
    p = likelihood_y(0.0, 100.0).item()
    assert p == pytest.approx(1.0 / (100.0 * math.sqrt(2 * math.pi)), rel=0.01)


def test_likelihood_rejects_non_positive_sigma():
    with pytest.raises(ParameterError):
        likelihood_y(0.0, 0.0)


def test_likelihood_gradient_matches_finite_difference():
    y = torch.tensor([0.3, -1.7, 2.2], dtype=DTYPE, requires_grad=True)
    s = torch.tensor([0.8, 1.5, 3.0], dtype=DTYPE, requires_grad=True)
    assert torch.autograd.gradcheck(lambda a, b: likelihood_y(a, b), (y, s), eps=1e-6, atol=1e-8, rtol=1e-3)


def test_prior_center_value():
    assert prior_z(0.0, 0.0, 1.0).item() == pytest.approx(0.2449, abs=1e-4)


@pytest.mark.parametrize("scale", [0.1, 1.0, 10.0])
def test_prior_is_normalized(scale):
    total = prior_z(GRID, 0.0, scale).sum().item()
    assert total == pytest.approx(1.0, abs=1e-9 + GRID.numel() * LIKELIHOOD_FLOOR)


def test_prior_is_symmetric():
    z = torch.linspace(-6, 6, 25, dtype=DTYPE)
    assert torch.allclose(prior_z(z, 0.0, 1.3), prior_z(-z, 0.0, 1.3), rtol=0, atol=1e-15)


@pytest.mark.parametrize("loc, scale", [(0.0, 1.0), (3.0, 0.5), (-2.0, 4.0)])
def test_prior_bin_centred_on_location(loc, scale):
    # z~ が μ にちょうど一致するビン（test モードの丸めで頻繁に起きる）
    expected = 2.0 / (1.0 + math.exp(-0.5 / scale)) - 1.0
    assert prior_z(loc, loc, scale).item() == pytest.approx(expected, rel=1e-12)
    grid = torch.arange(-400, 401, dtype=DTYPE) + loc
    assert prior_z(grid, loc, scale).sum().item() == pytest.approx(1.0, abs=1e-9 + grid.numel() * LIKELIHOOD_FLOOR)


def test_prior_likelihood_at_initialization(desk_arch):
    hp = HyperPrior(desk_arch)
    z = torch.zeros(desk_arch.hyper_channels, *desk_arch.hyper_hw, dtype=DTYPE)
    p = hp.prior_likelihood(z)
    assert torch.allclose(p, torch.full_like(p, 0.2449186624037092), rtol=1e-6, atol=0)


def test_prior_rejects_non_positive_scale():
    with pytest.raises(ParameterError):
        prior_z(0.0, 0.0, -1.0)


def test_importance_bits():
    assert importance(torch.zeros(1, dtype=DTYPE), torch.ones(1, dtype=DTYPE)).item() == pytest.approx(
        -math.log2(0.3829249), rel=1e-6
    )
    # 尤度 0.5 と 0.25 に対応する値を直接確かめる
    assert -math.log2(0.5) == 1.0 and -math.log2(0.25) == 2.0


def test_importance_grows_in_the_tails():
    y = torch.arange(0, 20, dtype=DTYPE)
    imp = importance(y, torch.full_like(y, 1.5))
    assert bool((imp[1:] >= imp[:-1]).all())
    assert bool(torch.isfinite(imp).all()) and bool((imp >= 0).all())


def test_importance_shape_mismatch():
    with pytest.raises(ShapeError):
        importance(torch.zeros(2, dtype=DTYPE), torch.ones(3, dtype=DTYPE))


def test_hyper_shapes_and_zero_params(desk_arch):
    hp = HyperPrior(desk_arch)
    y = torch.randn(12, 4, 8, dtype=DTYPE)
    z = hp.hyper_encode(y)
    assert z.shape == (4, 1, 2)
    sigma = hp.hyper_decode(z)
    assert sigma.shape == (12, 4, 8)
    assert bool((sigma >= 1e-6).all())
    with torch.no_grad():
        for p in list(hp.h_a.parameters()) + list(hp.h_s.parameters()):
            p.zero_()
    assert torch.equal(hp.hyper_encode(y), torch.zeros(4, 1, 2, dtype=DTYPE))
    assert torch.allclose(hp.hyper_decode(torch.zeros(4, 1, 2, dtype=DTYPE)), torch.full((12, 4, 8), math.log(2) + 1e-6, dtype=DTYPE))


def test_prior_scale_starts_near_one(desk_arch):
    hp = HyperPrior(desk_arch)
    assert torch.allclose(hp.prior_scale, torch.ones(4, dtype=DTYPE), atol=1e-12)
