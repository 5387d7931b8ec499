#!/usr/bin/env python3
"""
例外クラス定義

パイプライン全体で共有する例外階層。
CLIの終了コードは EXIT_CODE 属性で決まる。
"""


class VortexError(Exception):
    """全例外の基底クラス"""

    EXIT_CODE = 1


class ConfigError(VortexError):
    """設定ファイル・CLI引数の不正"""

    EXIT_CODE = 2


class DataError(VortexError):
    """マニフェスト・データファイルの不整合"""

    EXIT_CODE = 3


class InsufficientHistoryError(DataError):
    """後退差分に必要な過去スナップショットが存在しない"""


class DomainError(VortexError):
    """格子範囲・時間範囲外の参照"""

    EXIT_CODE = 3


class DirectionFieldDomainError(DomainError):
    """U_μ の外側で方向場を評価しようとした"""


class ClassificationError(VortexError):
    """特異点の指数が ±1/2 にならない"""


class NumericalDegeneracyError(VortexError):
    """数値的な退化（実行全体を中断する場合は終了コード4）"""

    EXIT_CODE = 4


class DegenerateCycleError(NumericalDegeneracyError):
    """Floquet乗数 ρ₂ が 1 に近すぎる"""


class SingularDenominatorError(NumericalDegeneracyError):
    """ψ の分母 ⟨χ, Sχ⊥⟩ がほぼゼロ"""

    def __init__(self, vertex: int, value: float):
        super().__init__(
            f"singular denominator <chi, S chi_perp> = {value:.3e} at vertex {vertex}"
        )
        self.vertex = vertex
        self.value = value


class OracleUnavailableError(VortexError):
    """移流後の曲線近傍で楕円型OECSを再計算できなかった"""
