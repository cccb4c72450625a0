# src/semrelay/errors.py
"""
semrelay 全体で使う例外。

コア側は失敗を例外で表現し、表示や終了コードへの変換は cli 側で行う。
"""

from __future__ import annotations

from typing import Any


class SemRelayError(Exception):
    """semrelay の全例外の基底。"""


class ShapeError(SemRelayError, ValueError):
    pass


class ParameterError(SemRelayError, ValueError):
    pass


class PayloadError(SemRelayError, ValueError):
    pass


class DegenerateInputError(SemRelayError, ValueError):
    pass


class StateError(SemRelayError, RuntimeError):
    pass


class ConfigError(SemRelayError):
    pass


class DataError(SemRelayError):
    pass


class DeepFadeError(SemRelayError, ArithmeticError):
    def __init__(self, gain: float) -> None:
        super().__init__(f"deep fade: |h|={abs(gain):.3e} is below the equalizer floor")
        self.gain = gain


class NumericFault(SemRelayError, ArithmeticError):
    pass


class TrainingFault(NumericFault):
    def __init__(self, message: str, diagnostics: dict[str, Any] | None = None) -> None:
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class TrainingDiverged(TrainingFault):
    pass


class GridEvaluationError(NumericFault):
    def __init__(self, v1: float, v2: float, cause: BaseException) -> None:
        super().__init__(f"evaluation failed at (v1={v1:.4f}, v2={v2:.4f}): {cause}")
        self.v1 = v1
        self.v2 = v2
