# apps/main.py
"""
アプリケーションのエントリポイント。
このファイルは"薄く"保つ。
- ログ設定
- 引数の解釈
- コマンドライン層の起動
は semrelay.core.main に任せる。
"""
from semrelay.core import main


if __name__ == "__main__":
    main()
