# src/semrelay/cli/app.py
"""
コマンドライン。

  train     学習してチェックポイントと損失曲線を保存
  run       1 回の伝送をシミュレートし、行を CSV と標準出力へ
  sweep     P / SNR / v1 / v2 / CBR のいずれかの軸で掃引
  optimize  (v1, v2) のグリッド探索
  overhead  付加情報の要素数の表
  inspect   チェックポイントまたは記録したペイロードの中身を表示

終了コード: 0 正常 / 2 設定・使い方の誤り / 3 データの誤り / 4 数値的な失敗
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, Sequence

import torch

from semrelay.errors import ConfigError, DataError, DeepFadeError, NumericFault, SemRelayError, ShapeError
from semrelay.link.hec import CompressedPayload, inferred_rate
from semrelay.models.checkpoint import is_checkpoint, read_arrays
from semrelay.models.system import SemanticRelayModel
from semrelay.services.config import SystemConfig, load_config, save_config
from semrelay.services.dataset import ingest, synthetic_pairs
from semrelay.services.optimizer import grid_search, model_evaluator
from semrelay.services.overhead import importance_count, overhead_table, shared_index_count
from semrelay.services.pipeline import RngStreams, run_pipeline
from semrelay.services.recent_checkpoints import RecentCheckpoints
from semrelay.services.results import write_frame, write_rows
from semrelay.services.sweep import AXES, SWEEP_COLUMNS, sweep
from semrelay.services.training import train
from semrelay.tensor import ImageBatch

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

RUN_COLUMNS = [
    "group", "trial", "seed", "scheme", "topology", "num_images", "gamma_p", "power_sr_dbm", "power_rd_dbm",
    "v1", "v2", "k1", "k2", "cbr", "snr_sr_db", "snr_rd_db", "mse", "psnr", "ms_ssim", "deep_fade",
]

EPILOG = f"""\
CSV columns
  run       : {", ".join(RUN_COLUMNS)}
  sweep     : {", ".join(SWEEP_COLUMNS)}
              (kind=trial: one row per point and trial; kind=summary: mean with *_std per point)
  optimize  : v1, v2, mean_psnr, std_psnr
  train     : step, rate_bits, mse, total
floats are written with 9 significant digits.

exit codes: 0 ok, 2 config/usage error, 3 data error, 4 numeric fault
"""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semrelay",
        description="two-hop semantic image transmission simulator",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--config", type=Path, help="YAML config with dotted keys")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable)")
    parser.add_argument("--log-level", default=None, help="DEBUG / INFO / WARNING / ERROR")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the codec and entropy model")
    p.add_argument("--data", type=Path, help="directory of PNG images (synthetic pairs when omitted)")
    p.add_argument("--out", type=Path, help="checkpoint path (default: <output_dir>/model.semrelay)")
    p.add_argument("--curve", type=Path, help="loss curve CSV (default: next to the checkpoint)")
    p.add_argument("--no-progress", action="store_true")

    p = sub.add_parser("run", help="simulate transmissions and report quality")
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--data", type=Path)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--out", type=Path, help="CSV output (default: <output_dir>/run.csv)")
    p.add_argument("--record", type=Path, metavar="DIR", help="write S1, S1^, S2, S2^ and I payloads")
    p.add_argument("--bypass-channel", action="store_true", help="replace both hops with an ideal link")

    p = sub.add_parser("sweep", help="sweep one parameter axis")
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--data", type=Path)
    p.add_argument("--axis", choices=AXES, required=True)
    p.add_argument("--values", required=True, help="comma-separated axis values")
    p.add_argument("--trials", type=int)
    p.add_argument("--out", type=Path, help="CSV output (default: <output_dir>/sweep_<axis>.csv)")

    p = sub.add_parser("optimize", help="grid search over (v1, v2)")
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--data", type=Path)
    p.add_argument("--grid", type=int, help="grid count K per axis")
    p.add_argument("--trials", type=int)
    p.add_argument("--out", type=Path, help="grid CSV (default: <output_dir>/grid.csv)")

    p = sub.add_parser("overhead", help="side-information element counts")
    p.add_argument("--channels", default="8,16,32,60,64,96,128", help="comma-separated channel counts C")
    p.add_argument("--gamma-p", type=float, default=None)
    p.add_argument("--out", type=Path, help="CSV output (default: <output_dir>/overhead.csv)")

    p = sub.add_parser("inspect", help="summarize a checkpoint or payload file")
    p.add_argument("path", type=Path)
    return parser


def _parse_values(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise ConfigError(f"cannot parse values {text!r}: {e}") from e


def _groups(cfg: SystemConfig, data: Path | None) -> list[ImageBatch]:
    arch = cfg.arch
    directory = data or cfg.paths.data_dir
    if directory is None:
        logger.info("no image directory given; using %d synthetic groups", cfg.train.synthetic_groups)
        return synthetic_pairs(cfg.train.synthetic_groups, arch.num_images, arch.image_height, arch.image_width, cfg.seed)
    return ingest(directory, arch.image_height, arch.image_width, arch.num_images)


def _load_model(cfg: SystemConfig, explicit: Path | None) -> SemanticRelayModel:
    recent = RecentCheckpoints()
    path = explicit or cfg.paths.checkpoint or recent.get_last()
    if path is None:
        raise ConfigError("no checkpoint given and none recorded; run `semrelay train` first or pass --checkpoint")
    if not path.is_file():
        raise ConfigError(f"checkpoint not found: {path}")
    try:
        model = SemanticRelayModel.load(path, expect=cfg.arch)
    except ShapeError as e:
        raise ConfigError(str(e)) from e
    recent.push(path)
    model.eval()
    return model


def cmd_train(args: argparse.Namespace, cfg: SystemConfig) -> int:
    groups = _groups(cfg, args.data)
    out = args.out or cfg.paths.output_dir / "model.semrelay"
    curve = args.curve or out.with_name(out.stem + "_loss.csv")
    model = SemanticRelayModel.create(cfg.arch, seed=cfg.train.seed)
    result = train(model, groups, cfg, progress=not args.no_progress, curve_path=curve)
    model.save(out, extra={"steps": len(result.curve), "final_loss": result.end_loss})
    save_config(cfg, out.with_name(out.stem + "_config.yaml"))
    RecentCheckpoints().push(out)
    print(f"trained {len(result.curve)} steps: training-set loss {result.start_loss:.6g} -> {result.end_loss:.6g}")
    print(f"checkpoint: {out}")
    return EXIT_OK


def _record(directory: Path, tag: str, payloads: dict[str, CompressedPayload], imp: torch.Tensor) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    items = dict(payloads)
    items["importance"] = CompressedPayload(imp.reshape(-1), tuple(int(s) for s in imp.shape))  # type: ignore[arg-type]
    for name, payload in items.items():
        (directory / f"{tag}_{name}.bin").write_bytes(payload.to_bytes())


def cmd_run(args: argparse.Namespace, cfg: SystemConfig) -> int:
    if args.trials < 1:
        raise ConfigError(f"--trials must be >= 1, got {args.trials}")
    model = _load_model(cfg, args.checkpoint)
    groups = _groups(cfg, args.data)
    rows = []
    for trial in range(args.trials):
        for gi, group in enumerate(groups):
            streams = RngStreams.derive(cfg.seed, 0, trial, gi)
            row, tx = run_pipeline(model, group, cfg, streams, trial=trial, bypass_channel=args.bypass_channel)
            rows.append({"group": gi, **row.to_dict()})
            if args.record is not None:
                _record(args.record, f"group{gi}_trial{trial}", tx.payloads, tx.importance)
            print(
                f"group {gi} trial {trial}: PSNR {row.psnr:.3f} dB  MS-SSIM {row.ms_ssim:.4f}  "
                f"CBR {row.cbr:.4f}  K1={row.k1} K2={row.k2}" + ("  [deep fade]" if row.deep_fade else "")
            )
    out = args.out or cfg.paths.output_dir / "run.csv"
    write_rows(out, rows, RUN_COLUMNS)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace, cfg: SystemConfig) -> int:
    values = _parse_values(args.values)
    trials = args.trials or cfg.sweep_trials
    model = _load_model(cfg, args.checkpoint)
    groups = _groups(cfg, args.data)
    frame = sweep(model, groups, cfg, args.axis, values, trials)
    out = args.out or cfg.paths.output_dir / f"sweep_{args.axis}.csv"
    write_frame(out, frame)
    summary = frame[frame["kind"] == "summary"]
    for _, r in summary.iterrows():
        print(f"{args.axis}={r['value']:g}: PSNR {r['psnr']:.3f} ± {r['psnr_std']:.3f} dB  MS-SSIM {r['ms_ssim']:.4f}")
    return EXIT_OK


def cmd_optimize(args: argparse.Namespace, cfg: SystemConfig) -> int:
    k = args.grid or cfg.optimize.grid_count
    trials = args.trials or cfg.optimize.trials
    if k < 1 or trials < 1:
        raise ConfigError("grid count and trials must be >= 1")
    model = _load_model(cfg, args.checkpoint)
    groups = _groups(cfg, args.data)
    result = grid_search(model_evaluator(model, groups, cfg), k=k, trials=trials, workers=cfg.workers)
    out = args.out or cfg.paths.output_dir / "grid.csv"
    write_frame(out, result.to_frame())
    print(f"v1_op={result.v1_op:.4f}  v2_op={result.v2_op:.4f}  PSNR={result.best_value:.3f} dB")
    return EXIT_OK


def cmd_overhead(args: argparse.Namespace, cfg: SystemConfig) -> int:
    gamma_p = cfg.arch.gamma_p if args.gamma_p is None else args.gamma_p
    channels = [int(c) for c in _parse_values(args.channels)]
    frame = overhead_table(channels, gamma_p=gamma_p)
    out = args.out or cfg.paths.output_dir / "overhead.csv"
    write_frame(out, frame)
    print(f"ED-HEM shared index, C=60, 64x128: {shared_index_count('ed-hem', 60, gamma_p, 64, 128)}")
    print(f"PC-HEM shared index, C=60, 64x128: {shared_index_count('pc-hem', 60, gamma_p, 64, 128)}")
    print(f"HEM importance, N=4, C=60, 32x64: {importance_count('hem', 4, 60, gamma_p, 32, 64)}")
    print(f"PC-HEM importance, N=4, C=60, 32x64: {importance_count('pc-hem', 4, 60, gamma_p, 32, 64)}")
    return EXIT_OK


def cmd_inspect(args: argparse.Namespace, cfg: SystemConfig) -> int:
    path: Path = args.path
    if not path.is_file():
        raise DataError(f"file not found: {path}")
    if is_checkpoint(path):
        arrays, metadata = read_arrays(path)
        total = sum(a.size for a in arrays.values())
        print(f"checkpoint {path}")
        for key, value in sorted(metadata.items()):
            print(f"  {key}: {value}")
        print(f"  arrays: {len(arrays)}  parameters: {total}")
        for name, arr in arrays.items():
            print(f"    {name}: {tuple(arr.shape)}")
        return EXIT_OK
    try:
        payload = CompressedPayload.from_bytes(path.read_bytes())
    except SemRelayError as e:
        raise DataError(f"{path} is neither a checkpoint nor a payload: {e}") from e
    values = payload.values
    power = float(torch.mean(values * values)) if payload.k else 0.0
    print(f"payload {path}")
    print(f"  K={payload.k}  shape={payload.shape}  L={payload.length}  rate={inferred_rate(payload):.6f}")
    print(f"  mean square={power:.6g}")
    return EXIT_OK


COMMANDS: dict[str, Callable[[argparse.Namespace, SystemConfig], int]] = {
    "train": cmd_train,
    "run": cmd_run,
    "sweep": cmd_sweep,
    "optimize": cmd_optimize,
    "overhead": cmd_overhead,
    "inspect": cmd_inspect,
}


def exit_code_for(error: BaseException) -> int:
    if isinstance(error, DataError):
        return EXIT_DATA
    if isinstance(error, (NumericFault, DeepFadeError)):
        return EXIT_NUMERIC
    return EXIT_CONFIG


def dispatch(args: argparse.Namespace) -> int:
    try:
        cfg = load_config(args.config, args.overrides)
        return COMMANDS[args.command](args, cfg)
    except SemRelayError as e:
        code = exit_code_for(e)
        logger.error("%s: %s", type(e).__name__, e)
        print(f"error: {e}", file=sys.stderr)
        return code


def run(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return dispatch(args)
