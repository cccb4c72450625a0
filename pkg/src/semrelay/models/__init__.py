# src/semrelay/models/__init__.py
"""学習される変換（LT / JSCC / ハイパープライオリ）とチェックポイント。"""

from semrelay.models.arch import ArchConfig, ConvLayerSpec
from semrelay.models.system import SemanticRelayModel

__all__ = ["ArchConfig", "ConvLayerSpec", "SemanticRelayModel"]
