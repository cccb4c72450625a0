# src/semrelay/services/config.py
"""
実験設定の読み込み。

設定ファイルは YAML で、キーは "channel.sr.distance_m" のようなドット区切り（入れ子で書いてもよい）。
コマンドラインの --set key=value が最後に上書きする。値は YAML のスカラー規則で解釈する。
読み込んだ値はすべて各データクラスの __post_init__ で検査し、不正なら ConfigError。
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping

import yaml

from semrelay.errors import ConfigError
from semrelay.link.channel import LinkParams
from semrelay.models.arch import ArchConfig

logger = logging.getLogger(__name__)

LAYOUTS = ("canonical", "original")
TOPOLOGIES = ("relay", "direct")
PRESETS = ("desk", "full")

DEFAULTS: dict[str, Any] = {
    "system.scheme": "pc-hem",
    "system.num_images": 2,
    "system.gamma_p": 0.5,
    "system.seed": 0,
    "system.workers": 1,
    "system.topology": "relay",
    "arch.preset": "desk",
    "arch.image_height": None,
    "arch.image_width": None,
    "arch.latent_channels": None,
    "arch.lt_widths": None,
    "arch.jscc_hidden": None,
    "arch.hyper_channels": None,
    "channel.path_loss_exp": 3.0,
    "channel.sr.distance_m": 50.0,
    "channel.sr.noise_dbm": -80.0,
    "channel.sr.power_dbm": 30.0,
    "channel.rd.distance_m": 50.0,
    "channel.rd.noise_dbm": -80.0,
    "channel.rd.power_dbm": 30.0,
    "channel.sd.distance_m": 100.0,
    "channel.sd.noise_dbm": -80.0,
    "channel.sd.power_dbm": 30.0,
    "rate.v1": 0.0,
    "rate.v2": 0.0,
    "destination.layout": "canonical",
    "metrics.max_val": 1.0,
    "metrics.ms_ssim_scales": None,
    "train.lambda": 0.01,
    "train.eta": "auto",
    "train.learning_rate": 2e-3,
    "train.groups_per_step": 4,
    "train.epochs": 20,
    "train.max_steps": 0,
    "train.seed": 0,
    "train.grad_clip": 10.0,
    "train.distance_m": 1.0,
    "train.noise_dbm": -66.0,
    "train.power_dbm": 0.0,
    "train.synthetic_groups": 16,
    "optimize.grid_count": 10,
    "optimize.trials": 20,
    "sweep.trials": 5,
    "paths.data_dir": None,
    "paths.checkpoint": None,
    "paths.output_dir": "runs",
}


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


@dataclass(frozen=True)
class LinkConfig:
    distance_m: float
    noise_dbm: float
    power_dbm: float

    def __post_init__(self) -> None:
        _require(self.distance_m > 0, f"distance_m must be positive, got {self.distance_m}")

    def params(self, path_loss_exp: float) -> LinkParams:
        return LinkParams.from_dbm(self.distance_m, path_loss_exp, self.noise_dbm, self.power_dbm)


@dataclass(frozen=True)
class ChannelConfig:
    path_loss_exp: float
    sr: LinkConfig
    rd: LinkConfig
    sd: LinkConfig

    def __post_init__(self) -> None:
        _require(self.path_loss_exp > 0, f"path_loss_exp must be positive, got {self.path_loss_exp}")

    def sr_params(self) -> LinkParams:
        return self.sr.params(self.path_loss_exp)

    def rd_params(self) -> LinkParams:
        return self.rd.params(self.path_loss_exp)

    def sd_params(self) -> LinkParams:
        """中継を使わない直接リンク S→D。"""
        return self.sd.params(self.path_loss_exp)


@dataclass(frozen=True)
class RateConfig:
    v1: float
    v2: float

    def __post_init__(self) -> None:
        for name in ("v1", "v2"):
            v = getattr(self, name)
            _require(0.0 <= v < 1.0, f"rate.{name} must lie in [0, 1), got {v}")


@dataclass(frozen=True)
class TrainConfig:
    lam: float
    eta: float
    learning_rate: float
    epochs: int
    max_steps: int
    seed: int
    grad_clip: float
    groups_per_step: int
    link: LinkConfig
    path_loss_exp: float
    synthetic_groups: int

    def __post_init__(self) -> None:
        _require(self.lam >= 0, f"train.lambda must be non-negative, got {self.lam}")
        _require(self.eta >= 0, f"train.eta must be non-negative, got {self.eta}")
        _require(self.learning_rate >= 0, f"train.learning_rate must be non-negative, got {self.learning_rate}")
        _require(self.epochs >= 1, f"train.epochs must be >= 1, got {self.epochs}")
        _require(self.max_steps >= 0, f"train.max_steps must be >= 0, got {self.max_steps}")
        _require(self.grad_clip >= 0, f"train.grad_clip must be >= 0, got {self.grad_clip}")
        _require(self.groups_per_step >= 1, f"train.groups_per_step must be >= 1, got {self.groups_per_step}")
        _require(self.synthetic_groups >= 1, f"train.synthetic_groups must be >= 1, got {self.synthetic_groups}")

    def link_params(self) -> LinkParams:
        return self.link.params(self.path_loss_exp)


@dataclass(frozen=True)
class OptimizeConfig:
    grid_count: int
    trials: int

    def __post_init__(self) -> None:
        _require(self.grid_count >= 1, f"optimize.grid_count must be >= 1, got {self.grid_count}")
        _require(self.trials >= 1, f"optimize.trials must be >= 1, got {self.trials}")


@dataclass(frozen=True)
class PathsConfig:
    data_dir: Path | None
    checkpoint: Path | None
    output_dir: Path


@dataclass(frozen=True)
class SystemConfig:
    arch: ArchConfig
    channel: ChannelConfig
    rate: RateConfig
    train: TrainConfig
    optimize: OptimizeConfig
    paths: PathsConfig
    layout: str
    topology: str
    seed: int
    workers: int
    sweep_trials: int
    max_val: float
    ms_ssim_scales: int | None
    values: Mapping[str, Any]

    def __post_init__(self) -> None:
        _require(self.layout in LAYOUTS, f"destination.layout must be one of {LAYOUTS}, got {self.layout!r}")
        _require(
            self.topology in TOPOLOGIES, f"system.topology must be one of {TOPOLOGIES}, got {self.topology!r}"
        )
        _require(self.workers >= 1, f"system.workers must be >= 1, got {self.workers}")
        _require(self.sweep_trials >= 1, f"sweep.trials must be >= 1, got {self.sweep_trials}")
        _require(self.max_val > 0, f"metrics.max_val must be positive, got {self.max_val}")
        _require(
            self.ms_ssim_scales is None or 1 <= self.ms_ssim_scales <= 5,
            f"metrics.ms_ssim_scales must be in 1..5, got {self.ms_ssim_scales}",
        )

    def to_flat(self) -> dict[str, Any]:
        return dict(self.values)

    def with_values(self, updates: Mapping[str, Any]) -> "SystemConfig":
        """一部のキーを差し替えた設定を作り直す（検査も通し直す）。"""
        merged = dict(self.values)
        for key, value in updates.items():
            if key not in DEFAULTS:
                raise ConfigError(f"unknown config key: {key}")
            merged[key] = value
        return build_config(merged)


def flatten(data: Mapping[str, Any], prefix: str = "") -> dict[str, Any]:
    out: dict[str, Any] = {}
    for key, value in data.items():
        full = f"{prefix}{key}"
        if isinstance(value, Mapping):
            out.update(flatten(value, prefix=f"{full}."))
        else:
            out[full] = value
    return out


def parse_override(text: str) -> tuple[str, Any]:
    if "=" not in text:
        raise ConfigError(f"override must look like key=value, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse value for {key}: {e}") from e
    return key.strip(), value


def _number(values: Mapping[str, Any], key: str, kind: type = float) -> Any:
    raw = values[key]
    if isinstance(raw, bool) or raw is None:
        raise ConfigError(f"{key} must be a number, got {raw!r}")
    try:
        num = kind(raw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{key} must be a number, got {raw!r}") from e
    if kind is int and float(raw) != num:
        raise ConfigError(f"{key} must be an integer, got {raw!r}")
    return num


def _optional_path(raw: Any) -> Path | None:
    return None if raw in (None, "") else Path(str(raw)).expanduser()


def _arch(values: Mapping[str, Any]) -> ArchConfig:
    preset = values["arch.preset"]
    _require(preset in PRESETS, f"arch.preset must be one of {PRESETS}, got {preset!r}")
    base = (ArchConfig.full() if preset == "full" else ArchConfig.desk()).to_dict()
    for name in ("image_height", "image_width", "latent_channels", "jscc_hidden", "hyper_channels"):
        if values[f"arch.{name}"] is not None:
            base[name] = _number(values, f"arch.{name}", int)
    widths = values["arch.lt_widths"]
    if widths is not None:
        if not isinstance(widths, (list, tuple)) or len(widths) != 3:
            raise ConfigError(f"arch.lt_widths must be a list of three widths, got {widths!r}")
        base["lt_widths"] = [int(w) for w in widths]
    base["num_images"] = _number(values, "system.num_images", int)
    base["gamma_p"] = _number(values, "system.gamma_p")
    base["scheme"] = str(values["system.scheme"])
    return ArchConfig.from_dict(base)


def _link(values: Mapping[str, Any], prefix: str) -> LinkConfig:
    return LinkConfig(
        distance_m=_number(values, f"{prefix}.distance_m"),
        noise_dbm=_number(values, f"{prefix}.noise_dbm"),
        power_dbm=_number(values, f"{prefix}.power_dbm"),
    )


def _eta(values: Mapping[str, Any], arch: ArchConfig) -> float:
    raw = values["train.eta"]
    if raw == "auto":
        return 1.0 / (3 * arch.image_height * arch.image_width)
    return _number(values, "train.eta")


def build_config(values: Mapping[str, Any]) -> SystemConfig:
    unknown = sorted(set(values) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    merged = {**DEFAULTS, **values}
    arch = _arch(merged)
    path_loss = _number(merged, "channel.path_loss_exp")
    scales = merged["metrics.ms_ssim_scales"]
    return SystemConfig(
        arch=arch,
        channel=ChannelConfig(
            path_loss, _link(merged, "channel.sr"), _link(merged, "channel.rd"), _link(merged, "channel.sd")
        ),
        rate=RateConfig(_number(merged, "rate.v1"), _number(merged, "rate.v2")),
        train=TrainConfig(
            lam=_number(merged, "train.lambda"),
            eta=_eta(merged, arch),
            learning_rate=_number(merged, "train.learning_rate"),
            epochs=_number(merged, "train.epochs", int),
            max_steps=_number(merged, "train.max_steps", int),
            seed=_number(merged, "train.seed", int),
            grad_clip=_number(merged, "train.grad_clip"),
            groups_per_step=_number(merged, "train.groups_per_step", int),
            link=_link(merged, "train"),
            path_loss_exp=path_loss,
            synthetic_groups=_number(merged, "train.synthetic_groups", int),
        ),
        optimize=OptimizeConfig(
            grid_count=_number(merged, "optimize.grid_count", int),
            trials=_number(merged, "optimize.trials", int),
        ),
        paths=PathsConfig(
            data_dir=_optional_path(merged["paths.data_dir"]),
            checkpoint=_optional_path(merged["paths.checkpoint"]),
            output_dir=Path(str(merged["paths.output_dir"])).expanduser(),
        ),
        layout=str(merged["destination.layout"]),
        topology=str(merged["system.topology"]),
        seed=_number(merged, "system.seed", int),
        workers=_number(merged, "system.workers", int),
        sweep_trials=_number(merged, "sweep.trials", int),
        max_val=_number(merged, "metrics.max_val"),
        ms_ssim_scales=None if scales is None else _number(merged, "metrics.ms_ssim_scales", int),
        values=merged,
    )


def load_config(path: Path | None = None, overrides: Iterable[str] = ()) -> SystemConfig:
    values: dict[str, Any] = {}
    if path is not None:
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"cannot parse {path}: {e}") from e
        if not isinstance(data, Mapping):
            raise ConfigError(f"{path} must contain a mapping at the top level")
        values.update(flatten(data))
    applied = [parse_override(o) for o in overrides]
    values.update(dict(applied))
    cfg = build_config(values)
    logger.info("config loaded: %s (%d overrides)", path or "<defaults>", len(applied))
    return cfg


def save_config(cfg: SystemConfig, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    text = yaml.safe_dump(_plain(cfg.to_flat()), sort_keys=True, allow_unicode=True)
    path.write_text(text, encoding="utf-8")


def _plain(values: Mapping[str, Any]) -> dict[str, Any]:
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in values.items()}
