# src/semrelay/services/__init__.py
"""設定・データ・学習・評価など、モデルと通信路を組み合わせて使う処理。"""
