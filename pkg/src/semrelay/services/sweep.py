# src/semrelay/services/sweep.py
"""
1 つの軸に沿ったパラメータ掃引。

軸: P（全ホップの送信電力 dBm）/ SNR（各ホップの平均 SNR dB）/ v1 / v2 / CBR（送信元の CBR）。
各点 × 各試行で 1 行、点ごとに平均と標準偏差の要約行を 1 行追加する。
試行はワーカープールで並列に回すが、乱数列は (seed, 点番号, 試行番号, グループ番号) から
決まるので、出力は実行順によらず同じになる。
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Sequence

import numpy as np
import pandas as pd

from semrelay.counting import floor_count
from semrelay.errors import ConfigError
from semrelay.link import hec
from semrelay.link.channel import power_for_snr, watts_to_dbm
from semrelay.models.system import SemanticRelayModel
from semrelay.services.config import SystemConfig
from semrelay.services.metrics import v1_for_cbr
from semrelay.services.pipeline import ExperimentRow, evaluate_groups
from semrelay.services.results import to_frame
from semrelay.tensor import ImageBatch

logger = logging.getLogger(__name__)

AXES = ("P", "SNR", "v1", "v2", "CBR")

SWEEP_COLUMNS = [
    "axis", "value", "kind", "trial", "seed", "scheme", "topology", "num_images", "gamma_p",
    "power_sr_dbm", "power_rd_dbm", "v1", "v2", "k1", "k2", "cbr", "snr_sr_db", "snr_rd_db",
    "mse", "psnr", "ms_ssim", "psnr_std", "ms_ssim_std", "deep_fade",
]


def payload_counts(cfg: SystemConfig) -> tuple[int, int]:
    """設定の (v1, v2) で送る要素数 (K1, K2)。直接リンクでは宛先に届くのは S1 なので K2 = K1。"""
    length = cfg.arch.payload_length
    k1 = floor_count(1.0 - cfg.rate.v1, length)
    if cfg.topology == "direct":
        return k1, k1
    v1_inferred = 1.0 - k1 / length
    k2 = floor_count(1.0 - hec.combined_rate(v1_inferred, cfg.rate.v2), length)
    return k1, k2


def point_config(cfg: SystemConfig, axis: str, value: float) -> SystemConfig:
    direct = cfg.topology == "direct"
    match axis:
        case "P":
            return cfg.with_values(
                {"channel.sr.power_dbm": value, "channel.rd.power_dbm": value, "channel.sd.power_dbm": value}
            )
        case "v1":
            return cfg.with_values({"rate.v1": value})
        case "v2":
            if direct:
                raise ConfigError("the v2 axis needs the relay topology (a direct link has no relay compression)")
            return cfg.with_values({"rate.v2": value})
        case "CBR":
            try:
                return cfg.with_values({"rate.v1": v1_for_cbr(value, cfg.arch)})
            except ValueError as e:
                raise ConfigError(str(e)) from e
        case "SNR":
            k1, k2 = payload_counts(cfg)
            if k1 == 0 or k2 == 0:
                raise ConfigError("SNR axis needs a non-empty payload on every hop")
            if direct:
                p_sd = power_for_snr(value, cfg.channel.sd_params(), k1)
                return cfg.with_values({"channel.sd.power_dbm": watts_to_dbm(p_sd)})
            p_sr = power_for_snr(value, cfg.channel.sr_params(), k1)
            p_rd = power_for_snr(value, cfg.channel.rd_params(), k2)
            return cfg.with_values(
                {"channel.sr.power_dbm": watts_to_dbm(p_sr), "channel.rd.power_dbm": watts_to_dbm(p_rd)}
            )
        case _:
            raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {AXES}")


def _trial_row(axis: str, value: float, row: ExperimentRow) -> dict[str, Any]:
    return {"axis": axis, "value": value, "kind": "trial", **row.to_dict(), "psnr_std": np.nan, "ms_ssim_std": np.nan}


def _summary_row(axis: str, value: float, rows: Sequence[ExperimentRow]) -> dict[str, Any]:
    psnr = np.array([r.psnr for r in rows], dtype=np.float64)
    ssim = np.array([r.ms_ssim for r in rows], dtype=np.float64)
    out = _trial_row(axis, value, rows[0])
    out.update(
        kind="summary",
        trial=-1,
        mse=float(np.mean([r.mse for r in rows])),
        psnr=float(psnr.mean()),
        ms_ssim=float(ssim.mean()),
        psnr_std=float(psnr.std()),
        ms_ssim_std=float(ssim.std()),
        deep_fade=any(r.deep_fade for r in rows),
    )
    return out


def sweep(
    model: SemanticRelayModel,
    groups: Sequence[ImageBatch],
    cfg: SystemConfig,
    axis: str,
    values: Sequence[float],
    trials: int,
) -> pd.DataFrame:
    if axis not in AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {AXES}")
    if trials < 1:
        raise ConfigError(f"trials must be >= 1, got {trials}")
    if not values:
        raise ConfigError("sweep needs at least one axis value")

    # 設定はすべて先に検査してからデータに触る
    points = [point_config(cfg, axis, float(v)) for v in values]
    tasks = [(pi, t) for pi in range(len(points)) for t in range(trials)]

    def run(task: tuple[int, int]) -> ExperimentRow:
        pi, t = task
        return evaluate_groups(model, groups, points[pi], pi, trial=t)

    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        results = list(pool.map(run, tasks))

    rows: list[dict[str, Any]] = []
    for pi, value in enumerate(values):
        point_rows = results[pi * trials : (pi + 1) * trials]
        rows.extend(_trial_row(axis, float(value), r) for r in point_rows)
        rows.append(_summary_row(axis, float(value), point_rows))
        logger.info("sweep %s=%g: mean PSNR %.3f dB", axis, float(value), rows[-1]["psnr"])
    return to_frame(rows, SWEEP_COLUMNS)
