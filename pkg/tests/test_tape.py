# tests/test_tape.py
"""GradientTape: 記録した forward の逆伝播。"""

import pytest
import torch
from torch import nn

from semrelay.errors import StateError
from semrelay.models.tape import GradientTape
from semrelay.tensor import DTYPE


class _Scale(nn.Module):
    def __init__(self) -> None:
        super().__init__()
        self.w = nn.Parameter(torch.tensor(3.0, dtype=DTYPE))
        self.unused = nn.Parameter(torch.tensor(1.0, dtype=DTYPE))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.w * x


def test_backward_without_forward_is_a_state_error():
    with pytest.raises(StateError):
        GradientTape(_Scale()).backward()


def test_identity_passes_upstream_gradient():
    tape = GradientTape(nn.Identity())
    x = torch.randn(4, dtype=DTYPE)
    tape.record(lambda t: t, x)
    upstream = torch.randn(4, dtype=DTYPE)
    grads = tape.backward(upstream)
    assert torch.equal(grads.inputs[0], upstream)


def test_parameter_and_input_gradients():
    m = _Scale()
    tape = GradientTape(m)
    x = torch.tensor([1.0, 2.0], dtype=DTYPE)
    tape.record(lambda t: m(t).sum(), x)
    g = tape.backward()
    assert g.params["w"].item() == 3.0
    assert g.params["unused"].item() == 0.0
    assert g.inputs[0].tolist() == [3.0, 3.0]


def test_zero_weight_layer_has_zero_input_gradient():
    conv = nn.Conv2d(2, 2, 3, padding=1).to(DTYPE)
    with torch.no_grad():
        conv.weight.zero_()
    tape = GradientTape(conv)
    tape.record(lambda t: conv(t).sum(), torch.randn(1, 2, 4, 4, dtype=DTYPE))
    assert torch.equal(tape.backward().inputs[0], torch.zeros(1, 2, 4, 4, dtype=DTYPE))


def test_tape_is_released_after_backward():
    m = _Scale()
    tape = GradientTape(m)
    tape.record(lambda t: m(t).sum(), torch.ones(1, dtype=DTYPE))
    tape.backward()
    assert not tape.recorded
    with pytest.raises(StateError):
        tape.backward()


def test_non_scalar_output_needs_grad_output():
    m = _Scale()
    tape = GradientTape(m)
    tape.record(m, torch.ones(3, dtype=DTYPE))
    with pytest.raises(ValueError):
        tape.backward()


def test_input_is_not_modified():
    x = torch.randn(3, dtype=DTYPE)
    before = x.clone()
    tape = GradientTape(nn.Identity())
    tape.record(lambda t: (t * t).sum(), x)
    tape.backward()
    assert torch.equal(x, before)
    assert not x.requires_grad
