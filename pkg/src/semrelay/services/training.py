# src/semrelay/services/training.py
"""
学習（全体の損失と Adam による更新ループ）。

  L = λ · R + η · D
  R = −Σ ln P(y~|σ) − Σ ln P(z~)            （自然対数。ログには bit 換算も出す）
  D = Σ (255·(I − Î))²                       （8bit スケールの二乗誤差和）

学習中は v1 = v2 = 0、通信路は train.* の設定（既定 d=1 m, P=0 dBm, 雑音 −66 dBm）を両ホップに使う。
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import torch
from tqdm import tqdm

from semrelay.errors import DataError, TrainingDiverged, TrainingFault
from semrelay.models.system import SemanticRelayModel
from semrelay.models.tape import Gradients, GradientTape
from semrelay.services.config import SystemConfig
from semrelay.services.pipeline import RngStreams, TransmissionSettings, forward_transmission
from semrelay.services.results import write_rows
from semrelay.tensor import ImageBatch

logger = logging.getLogger(__name__)

DIVERGENCE_FACTOR = 1e6
PIXEL_SCALE = 255.0
# 学習ステップ用の乱数列を評価用と分けるためのキー
TRAIN_STREAM = 1
EVAL_STREAM = 2


def rate_loss(likelihood_y: torch.Tensor, likelihood_z: torch.Tensor) -> torch.Tensor:
    """−Σ ln p。尤度は下限でクランプ済みなので常に有限。"""
    return -(torch.log(likelihood_y).sum() + torch.log(likelihood_z).sum())


def distortion(original: torch.Tensor, restored: torch.Tensor) -> torch.Tensor:
    diff = PIXEL_SCALE * (original - restored)
    return (diff * diff).sum()


@dataclass(frozen=True)
class LossTerms:
    total: torch.Tensor
    rate_nats: torch.Tensor
    distortion: torch.Tensor
    mse: float

    @property
    def rate_bits(self) -> float:
        return float(self.rate_nats) / math.log(2.0)


def loss_terms(
    model: SemanticRelayModel,
    group: ImageBatch,
    lam: float,
    eta: float,
    settings: TransmissionSettings,
    streams: RngStreams,
) -> LossTerms:
    tx = forward_transmission(model, group, settings, "train", streams)
    rate = rate_loss(tx.likelihood_y, tx.likelihood_z)
    dist = distortion(group, tx.reconstruction)
    mse = float(torch.mean((group - tx.reconstruction.detach()) ** 2))
    return LossTerms(total=lam * rate + eta * dist, rate_nats=rate, distortion=dist, mse=mse)


def _diagnostics(model: SemanticRelayModel, terms: LossTerms | None, step: int) -> dict[str, object]:
    norms = {name: float(p.detach().norm()) for name, p in model.named_parameters()}
    bad = [name for name, p in model.named_parameters() if not bool(torch.isfinite(p).all())]
    info: dict[str, object] = {"step": step, "non_finite_parameters": bad, "parameter_norms": norms}
    if terms is not None:
        info.update(rate_nats=float(terms.rate_nats), distortion=float(terms.distortion), mse=terms.mse)
    return info


def total_loss(
    model: SemanticRelayModel,
    group: ImageBatch,
    cfg: SystemConfig,
    streams: RngStreams,
    *,
    step: int = 0,
) -> tuple[LossTerms, Gradients]:
    settings = TransmissionSettings.for_training(cfg)
    captured: dict[str, LossTerms] = {}

    def fn(x: torch.Tensor) -> torch.Tensor:
        terms = loss_terms(model, x, cfg.train.lam, cfg.train.eta, settings, streams)
        captured["terms"] = terms
        return terms.total

    tape = GradientTape(model)
    tape.record(fn, group)
    terms = captured["terms"]
    if not bool(torch.isfinite(terms.total)):
        diag = _diagnostics(model, terms, step)
        logger.error("non-finite loss at step %d: %s", step, diag)
        raise TrainingFault(f"loss became non-finite at step {step}", diag)
    return terms, tape.backward()


@dataclass(frozen=True)
class StepRecord:
    step: int
    rate_bits: float
    mse: float
    total: float


@dataclass
class TrainResult:
    model: SemanticRelayModel
    curve: list[StepRecord] = field(default_factory=list)
    # 学習前後に全グループを固定の乱数列で評価した平均損失
    start_loss: float = math.nan
    end_loss: float = math.nan

    @property
    def initial_loss(self) -> float:
        return self.curve[0].total if self.curve else math.nan

    @property
    def final_loss(self) -> float:
        return self.curve[-1].total if self.curve else math.nan

    def smoothed(self, window: int = 10) -> list[float]:
        totals = np.array([r.total for r in self.curve])
        if len(totals) < window:
            return totals.tolist()
        kernel = np.ones(window) / window
        return np.convolve(totals, kernel, mode="valid").tolist()


def dataset_loss(model: SemanticRelayModel, groups: Sequence[ImageBatch], cfg: SystemConfig) -> float:
    """全グループの損失の平均。乱数列は (train.seed, グループ番号) で固定し、学習の前後で比べられるようにする。"""
    if not groups:
        raise DataError("no image groups to evaluate")
    settings = TransmissionSettings.for_training(cfg)
    tc = cfg.train
    with torch.no_grad():
        totals = [
            float(loss_terms(model, g, tc.lam, tc.eta, settings, RngStreams.derive(tc.seed, EVAL_STREAM, gi)).total)
            for gi, g in enumerate(groups)
        ]
    return float(np.mean(totals))


def _batches(order_rng: np.random.Generator, count: int, size: int) -> Iterator[list[int]]:
    """エポックごとに並べ替え、size 個ずつ区切ったグループ番号を無限に返す。"""
    while True:
        order = order_rng.permutation(count)
        for start in range(0, count, size):
            yield [int(i) for i in order[start : start + size]]


def train(
    model: SemanticRelayModel,
    groups: Sequence[ImageBatch],
    cfg: SystemConfig,
    *,
    progress: bool = True,
    curve_path: Path | None = None,
) -> TrainResult:
    """Adam で学習する。1 ステップは train.groups_per_step 組の勾配の平均。

    train.max_steps > 0 ならその回数だけ、0 なら train.epochs 周分だけ更新する。
    """
    if not groups:
        raise DataError("training set is empty")
    tc = cfg.train
    per_step = min(tc.groups_per_step, len(groups))
    steps_per_epoch = math.ceil(len(groups) / per_step)
    total_steps = tc.max_steps or steps_per_epoch * tc.epochs

    optimizer = torch.optim.Adam(model.parameters(), lr=tc.learning_rate, betas=(0.9, 0.999), eps=1e-8)
    order_rng = np.random.default_rng(np.random.SeedSequence(entropy=tc.seed, spawn_key=(0,)))
    batches = _batches(order_rng, len(groups), per_step)
    result = TrainResult(model=model)

    logger.info(
        "training: %d groups, %d per step, %d steps, lr=%g, lambda=%g, eta=%g, params=%d",
        len(groups), per_step, total_steps, tc.learning_rate, tc.lam, tc.eta, model.num_parameters(),
    )
    model.train()
    result.start_loss = dataset_loss(model, groups, cfg)
    epoch_losses: list[float] = []
    with tqdm(total=total_steps, desc="train", unit="step", disable=not progress) as bar:
        for step in range(total_steps):
            batch = next(batches)
            summed: dict[str, torch.Tensor] = {}
            records: list[LossTerms] = []
            for j, gi in enumerate(batch):
                streams = RngStreams.derive(tc.seed, TRAIN_STREAM, step, j)
                terms, grads = total_loss(model, groups[gi], cfg, streams, step=step)
                records.append(terms)
                for name, g in grads.params.items():
                    summed[name] = g if name not in summed else summed[name] + g
            loss = float(np.mean([float(t.total) for t in records]))

            if result.curve and loss > DIVERGENCE_FACTOR * result.initial_loss:
                diag = _diagnostics(model, records[-1], step)
                logger.error("training diverged at step %d (loss %.4g): %s", step, loss, diag)
                raise TrainingDiverged(
                    f"loss {loss:.4g} exceeds {DIVERGENCE_FACTOR:g}x the initial {result.initial_loss:.4g}", diag
                )

            optimizer.zero_grad(set_to_none=True)
            for name, p in model.named_parameters():
                p.grad = summed[name] / len(batch)
            if tc.grad_clip > 0:
                torch.nn.utils.clip_grad_norm_(model.parameters(), tc.grad_clip)
            optimizer.step()

            rate_bits = float(np.mean([t.rate_bits for t in records]))
            mse = float(np.mean([t.mse for t in records]))
            result.curve.append(StepRecord(step, rate_bits, mse, loss))
            epoch_losses.append(loss)
            bar.update(1)
            bar.set_postfix(loss=f"{loss:.4g}")
            if (step + 1) % steps_per_epoch == 0:
                logger.info(
                    "epoch %d: mean loss %.6g over %d steps",
                    (step + 1) // steps_per_epoch, float(np.mean(epoch_losses)), len(epoch_losses),
                )
                epoch_losses = []

    model.eval()
    result.end_loss = dataset_loss(model, groups, cfg)
    if curve_path is not None:
        write_rows(curve_path, [r.__dict__ for r in result.curve], columns=["step", "rate_bits", "mse", "total"])
    logger.info(
        "training finished: step loss %.6g -> %.6g, training-set loss %.6g -> %.6g",
        result.initial_loss, result.final_loss, result.start_loss, result.end_loss,
    )
    return result
