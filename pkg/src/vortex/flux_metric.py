#!/usr/bin/env python3
"""
楕円型OECSを横切る物質フラックスと持続性指標 Θ の計算

機能:
- 曲線沿いの χ フレーム（χ, χ⊥, 曲率 κ, ∇·χ, ψ）の構築
- 三角変分系の閉形式解による法線方向の連続化速度と Floquet 乗数 ρ₂
- フラックス密度 φ と ∮|φ| ds
- 回転コヒーレンス ω_γ、相対漏出率 Γ_γ、Θ = ω_γ / Γ_γ
- 数値信頼性スコアとベルト代表曲線の選択

符号の約束: 曲線は反時計回り、φ > 0 は内向きフラックス。
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import shapely
from scipy.integrate import cumulative_trapezoid, solve_ivp, trapezoid
from shapely.geometry import Polygon

from src.vortex.detection_rules import (
    SECONDS_PER_DAY,
    FluxSettings,
    OrbitSettings,
    Severity,
    ValidationFlag,
)
from src.vortex.exceptions import (
    DegenerateCycleError,
    DomainError,
    NumericalDegeneracyError,
    SingularDenominatorError,
)
from src.vortex.field_core import (
    DiagnosticFields,
    FlowField,
    decompose_gradient,
    rotate90,
    strain_analysis,
)
from src.vortex.oecs import ClosedCurve, DirectionParams, OecsBelt, anchor_index, chi

logger = logging.getLogger(__name__)

MIN_SAMPLES = 16


@dataclass(frozen=True, eq=False)
class CurveFrame:
    """等弧長に再サンプリングした曲線上の χ フレーム"""

    points: np.ndarray  # (n, 2) 元の座標
    arclength: np.ndarray  # (n,) [m]
    sigma: float  # 全周長 [m]
    chi: np.ndarray  # (n, 2) 接線と同じ向きの単位ベクトル
    chi_perp: np.ndarray  # (n, 2) Rχ（反時計回りなら内向き）
    grad_chi: np.ndarray  # (n, 2, 2) ∂χ_i/∂x_j [1/m]
    dchi_dt: np.ndarray  # (n, 2) [1/s]
    kappa: np.ndarray  # [1/m]
    div_chi: np.ndarray  # [1/m]
    psi: np.ndarray  # [1/s]
    velocity: np.ndarray  # (n, 2) [m/s]
    velocity_normal: np.ndarray  # ⟨v, χ⊥⟩ [m/s]

    @property
    def n_samples(self) -> int:
        return int(self.points.shape[0])

    @property
    def spacing(self) -> float:
        return self.sigma / self.n_samples

    def rolled(self, start: int) -> "CurveFrame":
        """始点を標本 start に移したフレーム"""

        def _roll(values: np.ndarray) -> np.ndarray:
            return np.roll(values, -start, axis=0)

        return replace(
            self,
            points=_roll(self.points),
            chi=_roll(self.chi),
            chi_perp=_roll(self.chi_perp),
            grad_chi=_roll(self.grad_chi),
            dchi_dt=_roll(self.dchi_dt),
            kappa=_roll(self.kappa),
            div_chi=_roll(self.div_chi),
            psi=_roll(self.psi),
            velocity=_roll(self.velocity),
            velocity_normal=_roll(self.velocity_normal),
        )


@dataclass(frozen=True, eq=False)
class FluxProfile:
    """法線方向の連続化速度とフラックス密度"""

    a: np.ndarray  # exp(∫₀^s ∇·χ)、a[0] = 1
    Pi_perp: np.ndarray  # [m/s]
    rho2: float
    z_perp0: float  # [m/s]
    sigma1_rate: float  # [m/s]
    phi: Optional[np.ndarray] = None  # [m/s]
    total_abs_flux: Optional[float] = None  # [m²/s]


@dataclass
class PersistenceReport:
    """曲線1本の持続性評価"""

    curve_id: Optional[str]
    time: float
    mu: float
    branch: str
    vertices: np.ndarray
    area: float
    sigma: float
    centroid: Tuple[float, float]
    omega_gamma: Optional[float] = None
    Gamma_gamma: Optional[float] = None
    Theta: Optional[float] = None
    rho2: Optional[float] = None
    sigma1_rate: Optional[float] = None
    z_perp0: Optional[float] = None
    total_abs_flux: Optional[float] = None
    ow_mean: Optional[float] = None
    pv_mean: Optional[float] = None
    grad_pv_mean: Optional[float] = None
    reliability_space: Optional[float] = None
    reliability_time: Optional[float] = None
    belt_id: Optional[int] = None
    is_representative: bool = False
    rank: Optional[int] = None
    error: Optional[str] = None
    flags: List[ValidationFlag] = field(default_factory=list)
    extras: Dict[str, Any] = field(default_factory=dict)
    profile: Optional[FluxProfile] = field(default=None, repr=False)
    sample_points: Optional[np.ndarray] = field(default=None, repr=False)

    @classmethod
    def for_curve(cls, curve: ClosedCurve, ds: FlowField) -> "PersistenceReport":
        c = curve.centroid(ds)
        return cls(
            curve_id=curve.curve_id,
            time=curve.time,
            mu=curve.mu,
            branch=curve.branch,
            vertices=curve.vertices,
            area=curve.area,
            sigma=curve.sigma,
            centroid=(float(c[0]), float(c[1])),
        )

    @property
    def is_valid(self) -> bool:
        return self.error is None and self.Theta is not None

    def to_dict(self) -> Dict[str, Any]:
        out = {
            "id": self.curve_id,
            "time": self.time,
            "mu": self.mu,
            "branch": self.branch,
            "vertices": np.asarray(self.vertices).tolist(),
            "area": self.area,
            "sigma": self.sigma,
            "centroid": list(self.centroid),
            "omega_gamma": self.omega_gamma,
            "Gamma": self.Gamma_gamma,
            "Theta": json_number(self.Theta),
            "rho2": self.rho2,
            "sigma1_rate": self.sigma1_rate,
            "total_abs_flux": self.total_abs_flux,
            "reliability": {"space": self.reliability_space, "time": self.reliability_time},
            "belt_id": self.belt_id,
            "is_representative": self.is_representative,
            "rank": self.rank,
            "error": self.error,
            "flags": [f.to_dict() for f in self.flags],
        }
        for key in ("ow_mean", "pv_mean", "grad_pv_mean"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        out.update(self.extras)
        return out


def json_number(value: Optional[float]) -> Any:
    """inf を文字列 "inf" に置き換える"""
    if value is None:
        return None
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return value


# --- フレーム構築 ---


def resample_closed(
    ds: FlowField, vertices: np.ndarray, spacing: float
) -> Tuple[np.ndarray, np.ndarray, float]:
    """
    閉じた折れ線を等弧長で再サンプリング

    開始位置は基準頂点に固定するので、同じ曲線なら始点が違っても同じ標本になる。

    Returns:
        (標本点 (n, 2), 弧長 (n,), 全周長)
    """
    vertices = np.roll(vertices, -anchor_index(vertices), axis=0)
    closed = np.vstack([vertices, vertices[:1]])
    seg = ds.segment_vectors(closed[:-1], closed[1:])
    cum = np.concatenate([[0.0], np.cumsum(np.hypot(seg[:, 0], seg[:, 1]))])
    sigma = float(cum[-1])
    n = max(MIN_SAMPLES, int(round(sigma / spacing)))
    s = sigma * np.arange(n) / n
    points = np.column_stack([np.interp(s, cum, closed[:, 0]), np.interp(s, cum, closed[:, 1])])
    return points, s, sigma


def _periodic_tangents(ds: FlowField, points: np.ndarray) -> np.ndarray:
    t = ds.segment_vectors(np.roll(points, 1, axis=0), np.roll(points, -1, axis=0))
    return t / np.linalg.norm(t, axis=1, keepdims=True)


def chi_rate(S: np.ndarray, dS: np.ndarray, mu: float, sign: float) -> np.ndarray:
    """
    S の変化率 dS に対する χ（向き未補正）の変化率

    θ, 固有値差 g, α² = (s2 - μ)/g の連鎖律で評価するので ⟨dχ, χ⟩ = 0 が丸め誤差内で成り立つ。
    """
    d = S[:, 0, 0] - S[:, 1, 1]
    b = S[:, 0, 1]
    dd = dS[:, 0, 0] - dS[:, 1, 1]
    db = dS[:, 0, 1]
    m = 0.5 * (S[:, 0, 0] + S[:, 1, 1])
    dm = 0.5 * (dS[:, 0, 0] + dS[:, 1, 1])

    g = np.hypot(d, 2.0 * b)
    g = np.maximum(g, np.finfo(float).tiny)
    theta = 0.5 * np.arctan2(2.0 * b, d)
    dtheta = (db * d - b * dd) / g ** 2
    dg = (d * dd + 4.0 * b * db) / g

    A = np.clip(0.5 + (m - mu) / g, 0.0, 1.0)
    dA = (dm * g - (m - mu) * dg) / g ** 2
    alpha = np.sqrt(A)
    beta = np.sqrt(1.0 - A)
    tiny = 1e-12
    dalpha = np.where(alpha > tiny, dA / (2.0 * np.maximum(alpha, tiny)), 0.0)
    dbeta = np.where(beta > tiny, -dA / (2.0 * np.maximum(beta, tiny)), 0.0)

    e1 = np.stack([np.sin(theta), -np.cos(theta)], axis=-1)
    e2 = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    c1 = dalpha - sign * beta * dtheta
    c2 = sign * dbeta + alpha * dtheta
    return c1[:, None] * e1 + c2[:, None] * e2


def _strain_at(ds: FlowField, points: np.ndarray, t: float) -> np.ndarray:
    return decompose_gradient(ds.velocity_gradient(points, t)).S


def _chain_rule_derivatives(
    ds: FlowField,
    points: np.ndarray,
    t: float,
    p: DirectionParams,
    S: np.ndarray,
    dS_dt: np.ndarray,
    orient: np.ndarray,
    h: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """解析勾配をもつ流れ: ∂ⱼS の中心差分と連鎖律による ∇χ, ∂ₜχ"""
    n = points.shape[0]
    grad = np.zeros((n, 2, 2))
    for j, unit in enumerate(np.eye(2)):
        offset = np.tile(h * unit, (n, 1))
        Sp = _strain_at(ds, ds.displace(points, offset), t)
        Sm = _strain_at(ds, ds.displace(points, -offset), t)
        grad[:, :, j] = chi_rate(S, (Sp - Sm) / (2.0 * h), p.mu, p.sign)
    dchi_dt = chi_rate(S, dS_dt, p.mu, p.sign)
    return orient[:, None, None] * grad, orient[:, None] * dchi_dt


def _aligned_chi(
    ds: FlowField,
    points: np.ndarray,
    t: float,
    p: DirectionParams,
    reference: np.ndarray,
    orbit_settings: OrbitSettings,
) -> np.ndarray:
    values = chi(ds, points, t, p, orbit_settings)
    flip = np.einsum("ni,ni->n", values, reference) < 0
    values[flip] *= -1.0
    return values


def _difference_derivatives(
    ds: FlowField,
    points: np.ndarray,
    t: float,
    p: DirectionParams,
    chi_vec: np.ndarray,
    h: float,
    settings: FluxSettings,
    orbit_settings: OrbitSettings,
) -> Tuple[np.ndarray, np.ndarray]:
    """格子データ: 向きを揃えた χ 標本の差分による ∇χ, ∂ₜχ"""
    n = points.shape[0]
    grad = np.zeros((n, 2, 2))
    for j, unit in enumerate(np.eye(2)):
        offset = np.tile(h * unit, (n, 1))
        plus = _aligned_chi(ds, ds.displace(points, offset), t, p, chi_vec, orbit_settings)
        minus = _aligned_chi(ds, ds.displace(points, -offset), t, p, chi_vec, orbit_settings)
        grad[:, :, j] = (plus - minus) / (2.0 * h)

    if ds.is_steady:
        return grad, np.zeros_like(chi_vec)
    dt = settings.dt_back or getattr(ds, "dt_back", None) or ds.native_time_step
    before = _aligned_chi(ds, points, t - dt, p, chi_vec, orbit_settings)
    return grad, (chi_vec - before) / (dt * SECONDS_PER_DAY)


def build_frame(
    curve: ClosedCurve,
    ds: FlowField,
    t: float,
    settings: FluxSettings = FluxSettings(),
    orbit_settings: OrbitSettings = OrbitSettings(),
) -> CurveFrame:
    """
    曲線沿いの χ フレームを構築

    κ = ⟨(∇χ)χ, Rχ⟩、∇·χ = tr(∇χ)、ψ = -⟨χ, ∂ₜS χ⟩ / (2⟨χ, S Rχ⟩)。
    解析勾配をもつ流れでは連鎖律、格子データでは χ 標本の差分を使う。

    Args:
        curve: 反時計回りの閉曲線（mu, branch を方向場のパラメータとして使う）
        ds: 速度場
        t: 評価時刻 [days]

    Raises:
        DirectionFieldDomainError: 曲線や差分点が U_μ の外に出た
        InsufficientHistoryError: ∂ₜS の後退差分に必要な過去データがない
        SingularDenominatorError: ψ の分母がほぼゼロ
    """
    p = DirectionParams(curve.mu, curve.branch)
    points, s, sigma = resample_closed(ds, curve.vertices, settings.resample_cells * ds.cell_size)
    tangents = _periodic_tangents(ds, points)

    parts = strain_analysis(ds, points, t)
    S = parts.S
    chi_raw = chi(ds, points, t, p, orbit_settings)
    orient = np.where(np.einsum("ni,ni->n", chi_raw, tangents) < 0, -1.0, 1.0)
    chi_vec = orient[:, None] * chi_raw
    chi_perp = rotate90(chi_vec)

    dS_dt = ds.strain_rate_derivative(points, t, settings.dt_back)
    h = settings.chi_step_cells * ds.cell_size
    if ds.has_exact_gradient:
        grad_chi, dchi_dt = _chain_rule_derivatives(ds, points, t, p, S, dS_dt, orient, h)
    else:
        grad_chi, dchi_dt = _difference_derivatives(
            ds, points, t, p, chi_vec, h, settings, orbit_settings
        )

    directional = np.einsum("nij,nj->ni", grad_chi, chi_vec)
    kappa = np.einsum("ni,ni->n", directional, chi_perp)
    div_chi = grad_chi[:, 0, 0] + grad_chi[:, 1, 1]

    denom = np.einsum("ni,nij,nj->n", chi_vec, S, chi_perp)
    scale = float(np.max(np.maximum(np.abs(parts.s1), np.abs(parts.s2))))
    bad = np.abs(denom) < settings.eps_denom * max(scale, np.finfo(float).tiny)
    if bad.any():
        k = int(np.argmax(bad))
        raise SingularDenominatorError(k, float(denom[k]))
    psi = -np.einsum("ni,nij,nj->n", chi_vec, dS_dt, chi_vec) / (2.0 * denom)

    velocity = ds.velocity(points, t)
    return CurveFrame(
        points=points,
        arclength=s,
        sigma=sigma,
        chi=chi_vec,
        chi_perp=chi_perp,
        grad_chi=grad_chi,
        dchi_dt=dchi_dt,
        kappa=kappa,
        div_chi=div_chi,
        psi=psi,
        velocity=velocity,
        velocity_normal=np.einsum("ni,ni->n", velocity, chi_perp),
    )


# --- 閉形式解 ---


def _closed(values: np.ndarray) -> np.ndarray:
    return np.append(values, values[0])


def solve_normal_velocity(frame: CurveFrame, settings: FluxSettings = FluxSettings()) -> FluxProfile:
    """
    周期条件を満たす法線方向の連続化速度

    a(s) = exp(∫₀^s ∇·χ)、Π⊥(s) = a(s)∫₀^s ψ/a、ρ₂ = a(σ)、
    z⊥(0) = Π⊥(σ)/(1 - ρ₂)、σ₁/Δt = Π∥(σ) + z⊥(0)∫₀^σ aκ（Π∥ = ∫κΠ⊥）。

    Raises:
        DegenerateCycleError: |1 - ρ₂| ≤ eps_floq
    """
    s = np.append(frame.arclength, frame.sigma)
    a = np.exp(cumulative_trapezoid(_closed(frame.div_chi), s, initial=0.0))
    rho2 = float(a[-1])
    if abs(1.0 - rho2) <= settings.eps_floq:
        raise DegenerateCycleError(
            f"Floquet multiplier rho2={rho2:.12g} too close to 1 (eps_floq={settings.eps_floq})"
        )
    pi_perp = a * cumulative_trapezoid(_closed(frame.psi) / a, s, initial=0.0)
    z_perp0 = float(pi_perp[-1] / (1.0 - rho2))

    kappa = _closed(frame.kappa)
    pi_par_end = float(trapezoid(kappa * pi_perp, s))
    a_kappa_end = float(trapezoid(a * kappa, s))
    return FluxProfile(
        a=a[:-1],
        Pi_perp=pi_perp[:-1],
        rho2=rho2,
        z_perp0=z_perp0,
        sigma1_rate=pi_par_end + z_perp0 * a_kappa_end,
    )


def integrate_variational_system(
    frame: CurveFrame,
    z0: Sequence[float],
    rtol: float = 1e-12,
) -> np.ndarray:
    """
    z′ = Ãz + c̃（Ã = [[0, κ], [0, ∇·χ]]、c̃ = [0, ψ]）を弧長に沿って直接積分

    係数は標本間を線形補間する。閉形式解の検算用。

    Returns:
        (n + 1, 2) の z(s)。最後の行は s = σ。
    """
    s = np.append(frame.arclength, frame.sigma)
    kappa = _closed(frame.kappa)
    div = _closed(frame.div_chi)
    psi = _closed(frame.psi)

    def _rhs(x: float, z: np.ndarray) -> np.ndarray:
        k = np.interp(x, s, kappa)
        c = np.interp(x, s, div)
        q = np.interp(x, s, psi)
        return np.array([k * z[1], c * z[1] + q])

    z0 = np.asarray(z0, dtype=float)
    scale = max(float(np.max(np.abs(z0))), float(np.max(np.abs(psi))) * frame.sigma, 1e-300)
    sol = solve_ivp(
        _rhs,
        (0.0, frame.sigma),
        z0,
        method="DOP853",
        t_eval=s,
        rtol=rtol,
        atol=1e-14 * scale,
        max_step=frame.spacing,
    )
    if not sol.success:
        raise NumericalDegeneracyError(f"variational integration failed: {sol.message}")
    return sol.y.T


def flux_density(frame: CurveFrame, profile: FluxProfile) -> Tuple[np.ndarray, float]:
    """φ = ⟨v, χ⊥⟩ - (a z⊥(0) + Π⊥) と ∮|φ| ds（周期台形則）"""
    phi = frame.velocity_normal - (profile.a * profile.z_perp0 + profile.Pi_perp)
    return phi, float(frame.spacing * np.sum(np.abs(phi)))


# --- 持続性指標 ---


def rotational_coherence(curve: ClosedCurve, ds: FlowField, t: float) -> float:
    """ω_γ = |∮⟨v, dx⟩ - ω̄A| / A（循環は頂点上の台形則）"""
    v = curve.vertices
    vel = ds.velocity(v, t)
    seg = ds.segment_vectors(v, np.roll(v, -1, axis=0))
    circulation = float(np.sum(0.5 * (vel + np.roll(vel, -1, axis=0)) * seg))
    return abs(circulation - ds.mean_vorticity(t) * curve.area) / curve.area


def reliability(frame: CurveFrame) -> Tuple[float, float]:
    """
    数値信頼性スコア

    space = max|(∇χ)ᵀχ|² / max‖∇χ‖²、time = max|⟨∂ₜχ/|∂ₜχ|, χ⟩|（∂ₜχ ≡ 0 なら 0）。
    """
    transposed = np.einsum("nji,nj->ni", frame.grad_chi, frame.chi)
    grad_scale = float(np.max(np.sum(frame.grad_chi ** 2, axis=(1, 2))))
    if grad_scale > 0:
        space = float(np.max(np.sum(transposed ** 2, axis=1))) / grad_scale
    else:
        space = 0.0

    norms = np.linalg.norm(frame.dchi_dt, axis=1)
    moving = norms > 0
    if not moving.any():
        return space, 0.0
    unit = frame.dchi_dt[moving] / norms[moving, None]
    time = float(np.max(np.abs(np.einsum("ni,ni->n", unit, frame.chi[moving]))))
    return space, time


def enclosed_means(curve: ClosedCurve, diag: DiagnosticFields) -> Dict[str, Optional[float]]:
    """曲線内の格子点での OW, PV, |∇PV| の平均（内部に格子点がなければ None）"""
    X, Y = np.meshgrid(diag.grid.lons, diag.grid.lats)
    inside = shapely.contains_xy(Polygon(curve.vertices), X, Y)
    if not inside.any():
        return {"ow_mean": None, "pv_mean": None, "grad_pv_mean": None}
    return {
        "ow_mean": float(np.mean(diag.ow[inside])),
        "pv_mean": float(np.mean(diag.pv[inside])),
        "grad_pv_mean": float(np.mean(diag.grad_pv_mag[inside])),
    }


def persistence(
    curve: ClosedCurve,
    ds: FlowField,
    t: float,
    settings: FluxSettings = FluxSettings(),
    orbit_settings: OrbitSettings = OrbitSettings(),
    diag: Optional[DiagnosticFields] = None,
) -> PersistenceReport:
    """
    曲線1本の ω_γ, Γ_γ, Θ と比較診断量・信頼性スコア

    ∮|φ| ds が ∮|v| ds に比べて無視できるときは Θ = inf。

    Raises:
        NumericalDegeneracyError, DomainError: 下位の計算から伝播
    """
    report = PersistenceReport.for_curve(curve, ds)
    frame = build_frame(curve, ds, t, settings, orbit_settings)
    profile = solve_normal_velocity(frame, settings)
    phi, total = flux_density(frame, profile)

    omega_gamma = rotational_coherence(curve, ds, t)
    speed_scale = frame.spacing * float(np.sum(np.linalg.norm(frame.velocity, axis=1)))
    gamma = total / curve.area
    if total <= settings.zero_flux_relative * speed_scale:
        theta = math.inf
    else:
        theta = omega_gamma / gamma

    report.omega_gamma = omega_gamma
    report.Gamma_gamma = gamma
    report.Theta = theta
    report.rho2 = profile.rho2
    report.sigma1_rate = profile.sigma1_rate
    report.z_perp0 = profile.z_perp0
    report.total_abs_flux = total
    report.profile = replace(profile, phi=phi, total_abs_flux=total)
    report.sample_points = frame.points

    if diag is not None:
        means = enclosed_means(curve, diag)
        report.ow_mean = means["ow_mean"]
        report.pv_mean = means["pv_mean"]
        report.grad_pv_mean = means["grad_pv_mean"]
        report.extras["pv_label"] = diag.pv_label
        if means["ow_mean"] is None:
            report.flags.append(
                ValidationFlag.create(
                    "no_enclosed_grid_points",
                    Severity.INFO,
                    "曲線内に格子点がないため比較診断量を計算できません",
                )
            )

    space, time = reliability(frame)
    report.reliability_space = space
    report.reliability_time = time
    if space > settings.reliability_space_max:
        logger.warning(f"event=reliability_exceeded kind=space curve={curve.curve_id} value={space:.3e}")
        report.flags.append(
            ValidationFlag.create(
                "reliability_space_exceeded",
                Severity.WARNING,
                "空間微分の信頼性スコアが閾値を超えています",
                {"value": space, "threshold": settings.reliability_space_max},
            )
        )
    if time > settings.reliability_time_max:
        logger.warning(f"event=reliability_exceeded kind=time curve={curve.curve_id} value={time:.3e}")
        report.flags.append(
            ValidationFlag.create(
                "reliability_time_exceeded",
                Severity.WARNING,
                "時間微分の信頼性スコアが閾値を超えています",
                {"value": time, "threshold": settings.reliability_time_max},
            )
        )

    logger.debug(
        f"event=persistence curve={curve.curve_id} omega_gamma={omega_gamma:.4e} "
        f"Gamma={gamma:.4e} Theta={theta:.4e} rho2={profile.rho2:.6f}"
    )
    return report


def score_curves(
    curves: Sequence[ClosedCurve],
    ds: FlowField,
    t: float,
    settings: FluxSettings = FluxSettings(),
    orbit_settings: OrbitSettings = OrbitSettings(),
    diag: Optional[DiagnosticFields] = None,
    jobs: int = 1,
) -> List[PersistenceReport]:
    """
    複数曲線を並列に評価

    退化・領域外で失敗した曲線は error を設定したレポートとして返す（順位付けからは除外）。
    """

    def _run(curve: ClosedCurve) -> PersistenceReport:
        try:
            return persistence(curve, ds, t, settings, orbit_settings, diag)
        except (NumericalDegeneracyError, DomainError) as e:
            logger.warning(
                f"event=curve_degenerate curve={curve.curve_id} "
                f"error={type(e).__name__} detail={e}"
            )
            report = PersistenceReport.for_curve(curve, ds)
            report.error = f"{type(e).__name__}: {e}"
            report.flags.append(
                ValidationFlag.create("degenerate_curve", Severity.ERROR, str(e))
            )
            return report

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as executor:
        return list(executor.map(_run, curves))


def _rank_key(report: PersistenceReport) -> Tuple[float, float, float, float]:
    return (-report.Theta, -report.area, report.centroid[0], report.centroid[1])


def select_representatives(
    belts: Sequence[OecsBelt], reports: Dict[str, PersistenceReport]
) -> List[PersistenceReport]:
    """
    ベルトごとに Θ 最大の曲線を代表として選び、Θ 降順に順位付け

    同値は面積の大きい方、さらに重心座標の辞書順。inf は全ての有限値より上位。
    有効なレポートをもたないベルトは順位に入らない。

    Returns:
        順位順の代表レポート
    """
    representatives: List[PersistenceReport] = []
    for belt in belts:
        members = []
        for curve in belt.members:
            report = reports.get(curve.curve_id)
            if report is None:
                continue
            report.belt_id = belt.belt_id
            if report.is_valid:
                members.append(report)
        if not members:
            logger.warning(f"event=belt_without_valid_member belt={belt.belt_id}")
            continue
        best = min(members, key=_rank_key)
        belt.representative = best.curve_id
        representatives.append(best)

    representatives.sort(key=_rank_key)
    for rank, report in enumerate(representatives, start=1):
        report.is_representative = True
        report.rank = rank
    return representatives
