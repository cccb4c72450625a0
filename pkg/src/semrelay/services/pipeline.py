# src/semrelay/services/pipeline.py
"""
送信元 → 中継 → 宛先 の 1 回分の伝送。

  LT_e → 相関による分割・統合 → A_e → ハイパープライオリ → 量子化 → C1
       → 正規化/送信/等化 (S→R) → C1⁻¹ → C2 → 正規化/送信/等化 (R→D) → C2⁻¹
       → A_d → 分解・再結合 → LT_d

system.topology = direct では中継を通さず、S1 を S→D の 1 ホップで送って C1⁻¹ だけを戻す（C2 は使わない）。

forward_transmission は学習（train モード、勾配あり）と評価（test モード）で共用する。
run_pipeline は評価用で、画質指標まで計算して ExperimentRow を返す。
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np
import torch

from semrelay.errors import DeepFadeError, ShapeError, StateError
from semrelay.link import hec
from semrelay.link.channel import LinkParams, average_snr_db, send
from semrelay.link.shared_features import ChannelPartition, merge, pairwise_min_rho, partition, split_combine
from semrelay.models.hyperprior import QuantMode, importance, likelihood_y, quantize
from semrelay.models.system import SemanticRelayModel
from semrelay.services.config import SystemConfig
from semrelay.services.metrics import QualityReport
from semrelay.tensor import ImageBatch, validate_image_batch

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RngStreams:
    """量子化ノイズと 2 ホップ分の通信路で独立した乱数列。"""

    quant: torch.Generator
    sr: np.random.Generator
    rd: np.random.Generator

    @classmethod
    def derive(cls, seed: int, *key: int) -> "RngStreams":
        root = np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in key))
        q, sr, rd = root.spawn(3)
        gen = torch.Generator()
        gen.manual_seed(int(q.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1)))
        return cls(quant=gen, sr=np.random.default_rng(sr), rd=np.random.default_rng(rd))


@dataclass(frozen=True)
class TransmissionSettings:
    v1: float
    v2: float
    sr: LinkParams
    rd: LinkParams
    layout: str = "canonical"
    bypass_channel: bool = False
    topology: str = "relay"
    sd: LinkParams | None = None

    @classmethod
    def from_config(cls, cfg: SystemConfig, *, bypass_channel: bool = False) -> "TransmissionSettings":
        return cls(
            v1=cfg.rate.v1,
            v2=cfg.rate.v2,
            sr=cfg.channel.sr_params(),
            rd=cfg.channel.rd_params(),
            layout=cfg.layout,
            bypass_channel=bypass_channel,
            topology=cfg.topology,
            sd=cfg.channel.sd_params(),
        )

    @classmethod
    def for_training(cls, cfg: SystemConfig) -> "TransmissionSettings":
        link = cfg.train.link_params()
        return cls(v1=0.0, v2=0.0, sr=link, rd=link, layout=cfg.layout)


@dataclass
class Transmission:
    reconstruction: torch.Tensor
    likelihood_y: torch.Tensor
    likelihood_z: torch.Tensor
    importance: torch.Tensor
    partition: ChannelPartition
    k1: int
    k2: int
    link_sr: LinkParams | None = None
    link_rd: LinkParams | None = None
    deep_fade: bool = False
    payloads: dict[str, hec.CompressedPayload] = field(default_factory=dict)


def source_partition(model: SemanticRelayModel, latents: Sequence[torch.Tensor]) -> ChannelPartition:
    arch = model.arch
    if arch.scheme == "hem":
        return ChannelPartition.personal_only(arch.latent_channels)
    return partition(pairwise_min_rho(latents), arch.gamma_p)


def destination_partition(part: ChannelPartition, layout: str) -> ChannelPartition:
    if layout == "original":
        return part
    return ChannelPartition.canonical(part.channels, part.num_shared)


def _hop(
    payload: hec.CompressedPayload, link: LinkParams, rng: np.random.Generator, bypass: bool, name: str
) -> tuple[hec.CompressedPayload, LinkParams | None, bool]:
    if bypass:
        return payload, None, False
    try:
        values, drawn = send(payload.values, link, rng)
    except DeepFadeError as e:
        logger.warning("%s hop: %s; payload is zeroed", name, e)
        return payload.with_values(torch.zeros_like(payload.values)), link.with_fading(e.gain), True
    return payload.with_values(values), drawn, False


def forward_transmission(
    model: SemanticRelayModel,
    group: ImageBatch,
    settings: TransmissionSettings,
    mode: QuantMode,
    streams: RngStreams,
) -> Transmission:
    arch = model.arch
    validate_image_batch(group)
    if group.shape[0] != arch.num_images:
        raise ShapeError(f"expected a group of {arch.num_images} images (N, 3, H, W), got {tuple(group.shape)}")

    lat = model.codec.latent_transform(group)
    latents = list(lat.unbind(0))
    part = source_partition(model, latents)
    s = merge(latents, part)

    y = model.codec.jscc_encode(s)
    z = model.hyper.hyper_encode(y)
    z_tilde = quantize(z, mode, streams.quant)
    sigma = model.hyper.hyper_decode(z_tilde)
    y_tilde = quantize(y, mode, streams.quant)
    imp = importance(y_tilde.detach(), sigma.detach())

    s1, _ = hec.compress_c1(y_tilde, imp, settings.v1)
    if settings.topology == "direct":
        # 中継なし: S1 を S→D の 1 ホップで送り、宛先で C1⁻¹ だけを戻す
        if settings.sd is None:
            raise StateError("direct topology needs an S->D link")
        s1_hat, link_sr, fade_sr = _hop(s1, settings.sd, streams.sr, settings.bypass_channel, "S->D")
        y_hat = hec.reshape_c1_inv(s1_hat, imp)
        s2, link_rd, fade_rd = s1, None, False
        payloads = {"s1": s1, "s1_hat": s1_hat}
    else:
        s1_hat, link_sr, fade_sr = _hop(s1, settings.sr, streams.sr, settings.bypass_channel, "S->R")
        y1_hat = hec.reshape_c1_inv(s1_hat, imp)

        s2, _ = hec.compress_c2(y1_hat, imp, hec.inferred_rate(s1_hat), settings.v2)
        s2_hat, link_rd, fade_rd = _hop(s2, settings.rd, streams.rd, settings.bypass_channel, "R->D")
        y_hat = hec.reshape_c2_inv(s2_hat, imp)
        payloads = {"s1": s1, "s1_hat": s1_hat, "s2": s2, "s2_hat": s2_hat}

    s_hat = model.codec.jscc_decode(y_hat)
    parts = split_combine(s_hat, destination_partition(part, settings.layout), arch.num_images)
    recon = model.codec.latent_inverse(torch.stack(parts, dim=0))

    return Transmission(
        reconstruction=recon,
        likelihood_y=likelihood_y(y_tilde, sigma),
        likelihood_z=model.hyper.prior_likelihood(z_tilde),
        importance=imp,
        partition=part,
        k1=s1.k,
        k2=s2.k,
        link_sr=link_sr,
        link_rd=link_rd,
        deep_fade=fade_sr or fade_rd,
        payloads=payloads,
    )


@dataclass(frozen=True)
class ExperimentRow:
    scheme: str
    topology: str
    num_images: int
    gamma_p: float
    seed: int
    trial: int
    power_sr_dbm: float
    power_rd_dbm: float
    v1: float
    v2: float
    k1: int
    k2: int
    cbr: float
    snr_sr_db: float
    snr_rd_db: float
    mse: float
    psnr: float
    ms_ssim: float
    deep_fade: bool

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _snr(link: LinkParams, k: int) -> float:
    return average_snr_db(link, k) if k > 0 else math.nan


def run_pipeline(
    model: SemanticRelayModel,
    group: ImageBatch,
    cfg: SystemConfig,
    streams: RngStreams,
    *,
    trial: int = 0,
    bypass_channel: bool = False,
) -> tuple[ExperimentRow, Transmission]:
    settings = TransmissionSettings.from_config(cfg, bypass_channel=bypass_channel)
    with torch.no_grad():
        tx = forward_transmission(model, group, settings, "test", streams)
    if tx.deep_fade:
        logger.warning("trial %d: deep fade; metrics use the degraded reconstruction", trial)
    report = QualityReport.measure(group, tx.reconstruction, max(tx.k1, 1), cfg.max_val, cfg.ms_ssim_scales)
    if settings.topology == "direct" and settings.sd is not None:
        # 直接リンクでは sr 列に S→D の値を入れ、rd 列は空にする
        hops = (cfg.channel.sd.power_dbm, math.nan, 0.0, _snr(settings.sd, tx.k1), math.nan)
    else:
        hops = (
            cfg.channel.sr.power_dbm, cfg.channel.rd.power_dbm, settings.v2,
            _snr(settings.sr, tx.k1), _snr(settings.rd, tx.k2),
        )
    power_sr, power_rd, v2, snr_sr, snr_rd = hops
    row = ExperimentRow(
        scheme=cfg.arch.scheme,
        topology=settings.topology,
        num_images=cfg.arch.num_images,
        gamma_p=cfg.arch.gamma_p,
        seed=cfg.seed,
        trial=trial,
        power_sr_dbm=power_sr,
        power_rd_dbm=power_rd,
        v1=settings.v1,
        v2=v2,
        k1=tx.k1,
        k2=tx.k2,
        cbr=report.cbr,
        snr_sr_db=snr_sr,
        snr_rd_db=snr_rd,
        mse=report.mse,
        psnr=report.psnr,
        ms_ssim=report.ms_ssim,
        deep_fade=tx.deep_fade,
    )
    return row, tx


def evaluate_groups(
    model: SemanticRelayModel,
    groups: Sequence[ImageBatch],
    cfg: SystemConfig,
    *key: int,
    trial: int = 0,
    bypass_channel: bool = False,
) -> ExperimentRow:
    """全グループを 1 回ずつ伝送し、指標をグループ平均した 1 行を返す。"""
    if not groups:
        raise ValueError("no image groups to evaluate")
    rows = [
        run_pipeline(
            model, g, cfg, RngStreams.derive(cfg.seed, *key, trial, gi), trial=trial, bypass_channel=bypass_channel
        )[0]
        for gi, g in enumerate(groups)
    ]
    return aggregate_rows(rows)


def aggregate_rows(rows: Sequence[ExperimentRow]) -> ExperimentRow:
    if len(rows) == 1:
        return rows[0]
    first = rows[0]

    def mean(name: str) -> float:
        return float(np.mean([getattr(r, name) for r in rows]))

    return ExperimentRow(
        **{
            **first.to_dict(),
            "mse": mean("mse"),
            "psnr": mean("psnr"),
            "ms_ssim": mean("ms_ssim"),
            "deep_fade": any(r.deep_fade for r in rows),
        }
    )
