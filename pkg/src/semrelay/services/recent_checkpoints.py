# src/semrelay/services/recent_checkpoints.py
"""最近保存・使用したチェックポイントの履歴（新しい順の JSON リスト）。"""

from __future__ import annotations

import json
import logging
import os
from pathlib import Path

logger = logging.getLogger(__name__)

HOME_ENV = "SEMRELAY_HOME"


class RecentCheckpoints:
    def __init__(self, app_name: str = "semrelay", limit: int = 10, base: Path | None = None) -> None:
        self._limit = limit
        self._path = self._default_store_path(app_name, base)

    @property
    def path(self) -> Path:
        return self._path

    def _default_store_path(self, app_name: str, base: Path | None) -> Path:
        if base is None:
            env = os.environ.get(HOME_ENV)
            base = Path(env).expanduser() if env else Path.home() / ".semrelay"
        base.mkdir(parents=True, exist_ok=True)
        return base / f"{app_name}_recent.json"

    def _load(self) -> list[str]:
        if not self._path.exists():
            return []
        try:
            data = json.loads(self._path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            logger.warning("ignoring unreadable checkpoint history %s: %s", self._path, e)
            return []
        return [str(p) for p in data] if isinstance(data, list) else []

    def _save(self, items: list[str]) -> None:
        self._path.write_text(json.dumps(items, ensure_ascii=False, indent=2), encoding="utf-8")

    def list_paths(self) -> list[str]:
        return self._load()

    def get_last(self) -> Path | None:
        """履歴のうち、まだ存在する最新のもの。"""
        for item in self._load():
            p = Path(item)
            if p.is_file():
                return p
        return None

    def push(self, path: Path | str) -> None:
        key = str(Path(path).expanduser().resolve())
        items = [p for p in self._load() if p != key]
        items.insert(0, key)
        self._save(items[: self._limit])
