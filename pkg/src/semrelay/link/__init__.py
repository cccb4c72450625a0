# src/semrelay/link/__init__.py
"""送信元・中継・宛先の間で特徴をやり取りする処理（共有特徴の抽出、HEC、通信路）。"""
