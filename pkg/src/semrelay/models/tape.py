# src/semrelay/models/tape.py
"""
forward の計算グラフを 1 回分記録し、逆伝播で全パラメータと入力の勾配を返す。

学習ループの勾配計算と勾配検査の両方がここを通る。
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import torch
from torch import nn

from semrelay.errors import StateError


@dataclass(frozen=True)
class Gradients:
    params: dict[str, torch.Tensor]
    inputs: tuple[torch.Tensor, ...]


class GradientTape:
    def __init__(self, module: nn.Module) -> None:
        self._module = module
        self._inputs: tuple[torch.Tensor, ...] | None = None
        self._output: torch.Tensor | None = None

    @property
    def recorded(self) -> bool:
        return self._output is not None

    def record(self, fn: Callable[..., torch.Tensor], *inputs: torch.Tensor) -> torch.Tensor:
        leaves = tuple(x.detach().clone().requires_grad_(True) for x in inputs)
        out = fn(*leaves)
        self._inputs = leaves
        self._output = out
        return out

    def backward(self, grad_output: torch.Tensor | None = None) -> Gradients:
        if self._output is None or self._inputs is None:
            raise StateError("backward called before a forward pass was recorded")
        out, leaves = self._output, self._inputs
        # グラフは 1 回で解放する
        self._output = None
        self._inputs = None

        if grad_output is None:
            if out.numel() != 1:
                raise ValueError("grad_output is required for a non-scalar output")
            grad_output = torch.ones_like(out)

        named = [(n, p) for n, p in self._module.named_parameters() if p.requires_grad]
        targets = [p for _, p in named] + list(leaves)
        if not out.requires_grad:
            grads: tuple[torch.Tensor | None, ...] = tuple(None for _ in targets)
        else:
            grads = torch.autograd.grad(out, targets, grad_outputs=grad_output, allow_unused=True)

        filled = [torch.zeros_like(t) if g is None else g for t, g in zip(targets, grads)]
        params = {name: filled[i] for i, (name, _) in enumerate(named)}
        return Gradients(params=params, inputs=tuple(filled[len(named):]))
