# src/semrelay/models/arch.py
"""
ネットワーク構成（層の並び・チャネル幅）の定義。

層の並びは固定で、チャネル幅だけを ArchConfig で差し替える。
full() が原寸、desk() が幅 1/8・入力 3x32x64 の卓上版。
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from semrelay.counting import floor_count
from semrelay.errors import ConfigError, ShapeError

SCHEMES = ("pc-hem", "hem")


class Activation(str, Enum):
    GDN = "GDN"
    IGDN = "IGDN"
    RELU = "ReLU"
    TANH = "Tanh"
    NONE = "None"


@dataclass(frozen=True)
class ConvLayerSpec:
    in_channels: int
    out_channels: int
    kernel_size: int
    stride: int
    padding: int
    output_padding: int = 0
    transposed: bool = False
    activation: Activation = Activation.NONE

    def __post_init__(self) -> None:
        if self.kernel_size % 2 != 1:
            raise ConfigError(f"kernel_size must be odd, got {self.kernel_size}")
        if self.stride not in (1, 2):
            raise ConfigError(f"stride must be 1 or 2, got {self.stride}")
        if self.padding != (self.kernel_size - 1) // 2:
            raise ConfigError(
                f"padding must be (kernel_size-1)/2={(self.kernel_size - 1) // 2}, got {self.padding}"
            )
        if self.output_padding and not self.transposed:
            raise ConfigError("output_padding only applies to transposed convolutions")

    def output_hw(self, height: int, width: int) -> tuple[int, int]:
        k, s, p = self.kernel_size, self.stride, self.padding
        if self.transposed:
            op = self.output_padding
            return ((height - 1) * s - 2 * p + k + op, (width - 1) * s - 2 * p + k + op)
        return ((height + 2 * p - k) // s + 1, (width + 2 * p - k) // s + 1)


def stack_output_shape(specs: list[ConvLayerSpec], shape: tuple[int, int, int]) -> tuple[int, int, int]:
    c, h, w = shape
    for spec in specs:
        if spec.in_channels != c:
            raise ShapeError(f"layer expects {spec.in_channels} channels, got {c}")
        h, w = spec.output_hw(h, w)
        c = spec.out_channels
    return (c, h, w)


def _conv(cin: int, cout: int, k: int, s: int, act: Activation) -> ConvLayerSpec:
    return ConvLayerSpec(cin, cout, k, s, (k - 1) // 2, activation=act)


def _convt(cin: int, cout: int, k: int, s: int, op: int, act: Activation) -> ConvLayerSpec:
    return ConvLayerSpec(cin, cout, k, s, (k - 1) // 2, output_padding=op, transposed=True, activation=act)


@dataclass(frozen=True)
class ArchConfig:
    image_height: int = 32
    image_width: int = 64
    latent_channels: int = 8
    lt_widths: tuple[int, int, int] = (8, 16, 32)
    jscc_hidden: int = 6
    hyper_channels: int = 4
    num_images: int = 2
    gamma_p: float = 0.5
    scheme: str = "pc-hem"

    def __post_init__(self) -> None:
        object.__setattr__(self, "lt_widths", tuple(int(v) for v in self.lt_widths))
        if self.image_height % 32 or self.image_width % 32:
            raise ConfigError(
                f"image size {self.image_height}x{self.image_width} must be divisible by 32 "
                "(8 for the latent transform, 4 more for the hyper-analysis)"
            )
        if len(self.lt_widths) != 3 or min(self.lt_widths) < 1:
            raise ConfigError(f"lt_widths needs three positive widths, got {self.lt_widths}")
        if min(self.latent_channels, self.jscc_hidden, self.hyper_channels) < 1:
            raise ConfigError("channel counts must be positive")
        if self.num_images < 1:
            raise ConfigError(f"num_images must be >= 1, got {self.num_images}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.scheme == "pc-hem":
            if not 0.0 < self.gamma_p < 1.0:
                raise ConfigError(f"gamma_p must lie in (0, 1), got {self.gamma_p}")
            if self.num_images < 2:
                raise ConfigError("pc-hem needs at least two images per group")

    @classmethod
    def full(cls) -> "ArchConfig":
        return cls(
            image_height=512,
            image_width=1024,
            latent_channels=64,
            lt_widths=(64, 128, 256),
            jscc_hidden=48,
            hyper_channels=32,
        )

    @classmethod
    def desk(cls) -> "ArchConfig":
        return cls()

    @property
    def shared_channels(self) -> int:
        if self.scheme == "hem":
            return 0
        return floor_count(self.gamma_p, self.latent_channels)

    @property
    def merged_channels(self) -> int:
        c, c1 = self.latent_channels, self.shared_channels
        return self.num_images * (c - c1) + c1

    @property
    def latent_hw(self) -> tuple[int, int]:
        return (self.image_height // 8, self.image_width // 8)

    @property
    def hyper_hw(self) -> tuple[int, int]:
        h, w = self.latent_hw
        return (h // 4, w // 4)

    @property
    def payload_length(self) -> int:
        """L = C2·h·w。"""
        h, w = self.latent_hw
        return self.merged_channels * h * w

    # ---- 層構成 ----

    def latent_transform_specs(self) -> list[ConvLayerSpec]:
        w1, w2, w3 = self.lt_widths
        return [
            _conv(3, w1, 3, 1, Activation.GDN),
            _conv(w1, w2, 3, 2, Activation.GDN),
            _conv(w2, w3, 3, 2, Activation.GDN),
            _conv(w3, self.latent_channels, 3, 2, Activation.NONE),
        ]

    def jscc_specs(self) -> list[ConvLayerSpec]:
        c2 = self.merged_channels
        return [
            _conv(c2, self.jscc_hidden, 3, 1, Activation.GDN),
            _conv(self.jscc_hidden, c2, 3, 1, Activation.NONE),
        ]

    def hyper_analysis_specs(self) -> list[ConvLayerSpec]:
        hc = self.hyper_channels
        return [
            _conv(self.merged_channels, hc, 3, 1, Activation.RELU),
            _conv(hc, hc, 5, 2, Activation.RELU),
            _conv(hc, hc, 5, 2, Activation.NONE),
        ]

    def hyper_synthesis_specs(self) -> list[ConvLayerSpec]:
        hc = self.hyper_channels
        # 最終層は線形。正値化は hyper_decode の softplus が受け持つ
        return [
            _convt(hc, hc, 5, 2, 1, Activation.RELU),
            _convt(hc, hc, 5, 2, 1, Activation.RELU),
            _convt(hc, self.merged_channels, 3, 1, 0, Activation.NONE),
        ]

    def latent_inverse_specs(self) -> list[ConvLayerSpec]:
        w1, w2, w3 = self.lt_widths
        return [
            _convt(self.latent_channels, w3, 3, 2, 1, Activation.GDN),
            _convt(w3, w2, 3, 2, 1, Activation.GDN),
            _convt(w2, w1, 3, 2, 1, Activation.GDN),
            _conv(w1, 3, 3, 1, Activation.TANH),
        ]

    def to_dict(self) -> dict[str, object]:
        return {
            "image_height": self.image_height,
            "image_width": self.image_width,
            "latent_channels": self.latent_channels,
            "lt_widths": list(self.lt_widths),
            "jscc_hidden": self.jscc_hidden,
            "hyper_channels": self.hyper_channels,
            "num_images": self.num_images,
            "gamma_p": self.gamma_p,
            "scheme": self.scheme,
        }

    @classmethod
    def from_dict(cls, data: dict[str, object]) -> "ArchConfig":
        known = {k: data[k] for k in cls().to_dict() if k in data}
        return cls(**known)  # type: ignore[arg-type]
