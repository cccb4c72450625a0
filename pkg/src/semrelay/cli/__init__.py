# src/semrelay/cli/__init__.py
"""利用者向けの入口（コマンドライン）。"""

from semrelay.cli.app import build_parser, dispatch, run

__all__ = ["build_parser", "dispatch", "run"]
