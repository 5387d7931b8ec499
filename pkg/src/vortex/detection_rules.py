#!/usr/bin/env python3
"""
渦検出・フラックス評価の判定ルールと既定パラメータ定義

数値パラメータはすべてここに集約し、各モジュールは設定データクラス経由で参照する。
"""

from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional


class Severity(Enum):
    """フラグの重要度"""

    ERROR = "ERROR"  # 順位付けから除外
    WARNING = "WARNING"  # 結果は有効だが要確認
    INFO = "INFO"  # 情報のみ


@dataclass
class ValidationFlag:
    """曲線・レポートに付与する判定フラグ"""

    name: str
    severity: str
    message: str
    details: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def create(
        cls,
        name: str,
        severity: Severity,
        message: str,
        details: Optional[Dict[str, Any]] = None,
    ) -> "ValidationFlag":
        return cls(name=name, severity=severity.value, message=message, details=details or {})

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class TopologySettings:
    """特異点検出・分類・ポアンカレ断面配置の設定"""

    r_class_cells: float = 1.5  # 指数計算円の半径（格子幅単位）
    class_samples: int = 64  # 指数計算円上のサンプル数
    index_tolerance: float = 0.1  # |index| と 1/2 の許容差
    pair_max_cells: float = 20.0  # wedgeペアの最大距離（格子幅単位）
    section_length_factor: float = 1.0  # 断面半長 = 係数 × ペア間距離
    merge_cells: float = 1.0  # この距離未満の候補は統合
    newton_max_iter: int = 50
    newton_residual: float = 1e-8  # 残差閾値（ひずみスケール比）
    degenerate_scale: float = 1e-8  # max|S| / max|∇v| がこれ以下なら恒等的にゼロとみなす


@dataclass(frozen=True)
class OrbitSettings:
    """方向場積分・極限閉軌道探索の設定"""

    step_cells: float = 0.2  # 弧長刻み Δ = 最小格子幅 / 5
    max_length_factor: float = 4.0  # L_max = 係数 × 領域周長
    n_seed: int = 50  # 断面あたりのシード数
    eps_close_cells: float = 0.1  # 閉合判定 ε_close = 最小格子幅 / 10
    tol_mu: float = 0.05  # μ一定性の許容幅（局所ひずみスケール比）
    root_xtol_cells: float = 1e-3  # 戻り写像の根探索許容幅
    min_return_steps: int = 8  # 出発直後の再接近を無視するステップ数
    eigen_gap: float = 1e-12  # s2 - s1 がこれ以下なら U_μ 外（ひずみスケール比）
    duplicate_area_fraction: float = 0.01  # 同一 μ で対称差面積がこれ以下なら重複
    near_search_cells: float = 10.0  # 既知曲線近傍の再探索で使う断面半長の下限（格子幅単位）


@dataclass(frozen=True)
class FluxSettings:
    """フラックス・持続性指標計算の設定"""

    eps_floq: float = 1e-6  # |1 - ρ₂| の下限
    eps_denom: float = 1e-12  # ⟨χ, Sχ⊥⟩ の下限（ひずみスケール比）
    resample_cells: float = 0.2  # 曲線の等弧長再サンプリング間隔 h_s
    chi_step_cells: float = 0.25  # ∇χ 差分の刻み（格子幅単位）
    dt_back: Optional[float] = None  # ∂ₜS 後退差分の時間刻み [days]（Noneでデータ間隔）
    reliability_space_max: float = 1e-3
    reliability_time_max: float = 0.1
    zero_flux_relative: float = 1e-9  # ∮|φ| がこれ以下（∮|v|比）なら漏出ゼロ


@dataclass(frozen=True)
class LifetimeSettings:
    """フィラメント化による寿命代理指標の設定"""

    kappa_fil: float = 1.2  # 周長増加率の上限
    delta_max: float = 0.15  # 凸包面積超過率の上限
    step_fraction: float = 0.1  # 移流刻み = 係数 × データ時間間隔
    vicinity_radius_m: Optional[float] = None  # 重心移動の上限（Noneで無効）
    max_refine_rounds: int = 12
    max_vertices: int = 200000


# 物理定数
PHYSICAL_CONSTANTS = {
    "g": 9.81,  # 重力加速度 [m/s²]
    "omega": 7.2921e-5,  # 地球自転角速度 [rad/s]
    "earth_radius": 6371000.0,  # 地球半径 [m]
}

SECONDS_PER_DAY = 86400.0

# 赤道除外帯（SSHからの地衡流変換時）
EQUATORIAL_EXCLUSION_DEG = 5.0

# 補間済み速度場の中心差分刻み（格子幅単位）
FD_STEP_CELLS = 1e-3

# 寿命判定の積分期間 [days] と近傍半径 [deg]
DEFAULT_HORIZONS_DAYS: List[float] = [7.0, 15.0, 30.0, 60.0, 90.0, 120.0]
VICINITY_RADIUS_DEG = 3.0

# OW閾値の感度比較に使う係数 α（閾値 = -α × 空間標準偏差）
OW_THRESHOLD_ALPHAS = (0.2, 1.0)

# μ掃引の既定値
MU_SWEEP_CONFIG = {
    "count": 11,
    "bound_fraction": 0.3,  # μ* = 係数 × median(max(|s1|, |s2|))
    "branches": ["plus", "minus"],
}

# フラックス検証（面積交換オラクル）の εΔt [days]
ORACLE_EPS_DT_DAYS = [0.05, 0.1, 0.2]

# ポリゴン演算前の頂点スナップ（領域サイズ比）
CLIP_SNAP_FRACTION = 1e-9

# PVの扱い（絶対渦度による代理指標）
PV_LABEL = "absolute_vorticity_proxy"
