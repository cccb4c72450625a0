# src/semrelay/__init__.py
"""2 ホップ（送信元 → 中継 → 宛先）のセマンティック画像伝送シミュレータ。"""

__version__ = "0.1.0"
