# src/semrelay/core.py
"""
プロジェクトの中核エントリ。
ログを設定し、引数を解釈して、コマンドライン層へ制御を渡す。
"""

from __future__ import annotations

import logging
import os
import sys
from typing import Sequence

from semrelay.cli.app import build_parser, dispatch

LOG_ENV = "SEMRELAY_LOG_LEVEL"
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(level: str | None = None) -> int:
    name = (level or os.environ.get(LOG_ENV) or "INFO").upper()
    value = logging.getLevelName(name)
    if not isinstance(value, int):
        value = logging.INFO
    logging.basicConfig(level=value, format=LOG_FORMAT, force=True)
    if name != logging.getLevelName(value):
        logging.getLogger(__name__).warning("unknown log level %r; using INFO", name)
    return value


def main(argv: Sequence[str] | None = None) -> None:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    sys.exit(dispatch(args))
