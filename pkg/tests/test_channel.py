# tests/test_channel.py
"""通信路（電力正規化・フェージング・雑音・等化）。"""

import math

import numpy as np
import pytest
import torch

from semrelay.errors import DeepFadeError, DegenerateInputError, ParameterError, StateError
from semrelay.link.channel import (
    LinkParams,
    average_snr_db,
    dbm_to_watts,
    equalize,
    normalize_power,
    power_for_snr,
    sample_fading,
    send,
    transmit,
    watts_to_dbm,
)
from semrelay.tensor import DTYPE


@pytest.mark.parametrize(("dbm", "watts"), [(0.0, 1e-3), (30.0, 1.0), (-80.0, 1e-11)])
def test_dbm_to_watts(dbm, watts):
    assert dbm_to_watts(dbm) == pytest.approx(watts, rel=1e-12)
    assert watts_to_dbm(watts) == pytest.approx(dbm, abs=1e-9)


def test_normalize_power_example():
    unit, scale = normalize_power(torch.tensor([3.0, 4.0], dtype=DTYPE))
    assert torch.allclose(unit, torch.tensor([3.0, 4.0], dtype=DTYPE) / math.sqrt(12.5))
    assert float(torch.mean(unit * unit)) == pytest.approx(1.0, abs=1e-12)
    assert float(scale) == pytest.approx(math.sqrt(12.5))


def test_normalize_unit_vector_is_unchanged():
    s = torch.tensor([1.0, -1.0, 1.0, -1.0], dtype=DTYPE)
    unit, scale = normalize_power(s)
    assert torch.equal(unit, s)
    assert float(scale) == 1.0


def test_normalize_rejects_zero_and_empty():
    with pytest.raises(DegenerateInputError):
        normalize_power(torch.zeros(3, dtype=DTYPE))
    with pytest.raises(ValueError):
        normalize_power(torch.zeros(0, dtype=DTYPE))


def test_fading_variance_follows_path_loss():
    draws = sample_fading(50.0, 3.0, np.random.default_rng(3), size=1_000_000)
    assert np.var(draws) == pytest.approx(8e-6, rel=0.03)


def test_unit_distance_gain():
    link = LinkParams(1.0, 3.0, 1e-11, 1.0)
    assert link.gain_variance == 1.0


def test_fading_is_seeded():
    a = sample_fading(50.0, 3.0, np.random.default_rng(9))
    b = sample_fading(50.0, 3.0, np.random.default_rng(9))
    assert a == b


@pytest.mark.parametrize(("d", "a"), [(0.0, 3.0), (10.0, 0.0)])
def test_fading_rejects_bad_geometry(d, a):
    with pytest.raises(ValueError):
        sample_fading(d, a, np.random.default_rng(0))


def test_link_params_validation():
    with pytest.raises(ParameterError):
        LinkParams(50.0, 3.0, 0.0, 1.0)
    with pytest.raises(ParameterError):
        LinkParams(-1.0, 3.0, 1e-11, 1.0)


def test_per_symbol_power_halves_when_payload_doubles():
    link = LinkParams.from_dbm(50.0, 3.0, -80.0, 30.0)
    assert link.per_symbol_power(200) == pytest.approx(link.per_symbol_power(100) / 2)
    with pytest.raises(ValueError):
        link.per_symbol_power(0)


def test_noiseless_transmit_is_identity(gen):
    s = torch.randn(16, dtype=DTYPE, generator=gen)
    link = LinkParams(1.0, 3.0, 1e-300, 16.0, fading=1.0)
    r = transmit(s, link, np.random.default_rng(0))
    assert torch.allclose(r, s, rtol=0, atol=1e-100)


def test_transmit_errors():
    link = LinkParams(1.0, 3.0, 1e-11, 1.0)
    with pytest.raises(StateError):
        transmit(torch.ones(3, dtype=DTYPE), link, np.random.default_rng(0))
    with pytest.raises(ValueError):
        transmit(torch.ones(0, dtype=DTYPE), link.with_fading(1.0), np.random.default_rng(0))


def test_noiseless_chain_is_identity(gen):
    s = torch.randn(64, dtype=DTYPE, generator=gen) * 3.0
    link = LinkParams(50.0, 3.0, 1e-300, 1.0, fading=0.7)
    unit, scale = normalize_power(s)
    r = transmit(unit, link, np.random.default_rng(1))
    est = equalize(r, 0.7, link.per_symbol_power(64), scale)
    assert torch.allclose(est, s, rtol=0, atol=1e-9)


def test_equalize_reports_deep_fade():
    with pytest.raises(DeepFadeError):
        equalize(torch.ones(3, dtype=DTYPE), 1e-13, 1.0, 1.0)


def test_equalize_identity_gain():
    r = torch.tensor([0.5, -2.0], dtype=DTYPE)
    assert torch.equal(equalize(r, 1.0, 1.0, 1.0), r)


def test_snr_helpers_are_inverse():
    link = LinkParams.from_dbm(50.0, 3.0, -80.0, 30.0)
    p = power_for_snr(12.0, link, 384)
    assert average_snr_db(LinkParams(50.0, 3.0, link.noise_power_w, p), 384) == pytest.approx(12.0)


def test_send_high_snr_recovers_payload(gen):
    values = torch.randn(32, dtype=DTYPE, generator=gen)
    link = LinkParams.from_dbm(1.0, 3.0, -150.0, 60.0)
    est, drawn = send(values, link, np.random.default_rng(5))
    assert drawn.fading is not None
    assert torch.allclose(est, values, atol=1e-6)


def test_send_empty_and_zero_payloads():
    link = LinkParams.from_dbm(50.0, 3.0, -80.0, 30.0)
    empty = torch.zeros(0, dtype=DTYPE)
    out, _ = send(empty, link, np.random.default_rng(0))
    assert out.numel() == 0

    rng_zero, rng_ref = np.random.default_rng(4), np.random.default_rng(4)
    out, _ = send(torch.zeros(8, dtype=DTYPE), link, rng_zero)
    assert torch.equal(out, torch.zeros(8, dtype=DTYPE))
    send(torch.ones(8, dtype=DTYPE), link, rng_ref)
    assert rng_zero.random() == rng_ref.random()


def test_deep_fade_is_reported_for_zero_and_empty_payloads(monkeypatch):
    from semrelay.link import channel

    monkeypatch.setattr(channel, "sample_fading", lambda d, a, rng, size=None: 0.0)
    link = LinkParams.from_dbm(50.0, 3.0, -80.0, 30.0)
    for values in (torch.zeros(8, dtype=DTYPE), torch.zeros(0, dtype=DTYPE), torch.ones(8, dtype=DTYPE)):
        with pytest.raises(DeepFadeError) as info:
            send(values, link, np.random.default_rng(0))
        assert info.value.gain == 0.0


def test_received_power_matches_model():
    k = 200_000
    rng = np.random.default_rng(11)
    s = torch.from_numpy(rng.choice([-1.0, 1.0], size=k))
    link = LinkParams(1.0, 3.0, 5e-6, k * 5e-6, fading=0.8)
    r = transmit(s, link, np.random.default_rng(12))
    expected = link.per_symbol_power(k) * 0.8**2 + link.noise_power_w
    assert float(torch.mean(r * r)) == pytest.approx(expected, rel=0.03)


def test_zero_forcing_error_variance():
    k = 100_000
    rng = np.random.default_rng(21)
    values = torch.from_numpy(2.0 * rng.choice([-1.0, 1.0], size=k))
    h = 0.3
    link = LinkParams(1.0, 3.0, 1e-5, k * 1e-4, fading=h)
    unit, scale = normalize_power(values)
    assert float(scale) == pytest.approx(2.0)
    p_bar = link.per_symbol_power(k)
    est = equalize(transmit(unit, link, np.random.default_rng(22)), h, p_bar, scale)
    err = est - values
    expected = link.noise_power_w * 4.0 / (p_bar * h**2)
    assert float(torch.var(err)) == pytest.approx(expected, rel=0.03)
    assert abs(float(err.mean())) < 5 * math.sqrt(expected / k)


def test_normalize_power_under_autograd_does_not_warn(gen):
    import warnings

    s = torch.randn(16, dtype=DTYPE, generator=gen, requires_grad=True)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        unit, scale = normalize_power(s)
    unit.sum().backward()
    assert s.grad is not None and scale.requires_grad
