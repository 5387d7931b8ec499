#!/usr/bin/env python3
"""
解析的ベンチマーク流れと座標系変換

機能:
- 剛体回転・単純せん断・純ひずみ・一様流・摂動渦・減衰渦・複数渦・非定常ダブルジャイア
- 速度と厳密な速度勾配の評価（格子不要）
- 格子へのラスタライズ（VelocityDataset 生成）
- 時間依存の回転・並進による座標変換 x = Q(t)x̃ + b(t)

位置はメートル、時刻は日、速度は m/s、率は 1/s。
"""

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.vortex.detection_rules import SECONDS_PER_DAY
from src.vortex.exceptions import ConfigError, DomainError
from src.vortex.field_core import (
    FlowField,
    GridSpec,
    VelocityDataset,
    as_points,
    decompose_gradient,
    trapezoid_weights,
)

logger = logging.getLogger(__name__)

# 渦1個分のパラメータ（L, rc0: m / omega0, lam, amp: 1/s / nu: rad/day / period, tau_d: days）
VORTEX_DEFAULTS: Dict[str, Any] = {
    "L": 50000.0,  # ガウス核の長さスケール
    "rc0": 30000.0,  # 物質的に引き付けるリングの半径
    "omega0": 1.0e-4,  # 中心の回転角速度
    "lam": -2.0e-6,  # 動径速度の強さ（負でリングが引力的）
    "amp": 5.0e-7,  # 四重極モードの流線関数振幅
    "nu": 0.0,  # 四重極モードの角振動数
    "eps_p": 0.0,  # リング半径の呼吸振幅
    "period": 1.0,  # 呼吸の周期
    "tau_d": None,  # 循環の減衰時間（None で減衰なし）
    "x0": 0.0,
    "y0": 0.0,
}

DEFAULT_PARAMETERS: Dict[str, Dict[str, Any]] = {
    "solid_rotation": {"omega": 1.0e-5},
    "pure_shear": {"gamma": 1.0e-5},
    "pure_strain": {"alpha": 1.0e-5},
    "uniform": {"U": 0.1, "V": 0.0},
    "perturbed_vortex": dict(VORTEX_DEFAULTS),
    "decaying_vortex": dict(VORTEX_DEFAULTS, tau_d=2.0),
    "two_vortex": dict(VORTEX_DEFAULTS, separation=300000.0, tau_d=None, tau_d_second=2.0),
    "multi_vortex": dict(VORTEX_DEFAULTS, count=3, separation=300000.0, tau_d=[None, 4.0, 0.5]),
    "unsteady_gyre": {"A": 1.0e3, "L": 100000.0, "eps": 0.25, "period": 10.0},
}

EXACT_TRAJECTORY_KINDS = ("solid_rotation", "pure_shear", "pure_strain", "uniform")
VORTEX_KINDS = ("perturbed_vortex", "decaying_vortex", "two_vortex", "multi_vortex")

# 解析流れの ∂ₜS 中心差分の刻み [days]
ANALYTIC_DT_DAYS = 1e-4

# 領域平均渦度の台形則サンプル数（1辺）
MEAN_VORTICITY_SAMPLES = 201


def _rotation_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class FrameChange:
    """
    座標変換 x = Q(t)x̃ + b(t)

    θ(t) = theta0 + theta_rate·τ + theta_amp·sin(theta_freq·τ)
    b(t) = b0 + b_rate·τ + b_amp·sin(b_freq·τ)（τ = 経過秒）
    """

    theta0: float = 0.0
    theta_rate: float = 0.0
    theta_amp: float = 0.0
    theta_freq: float = 0.0
    b0: Tuple[float, float] = (0.0, 0.0)
    b_rate: Tuple[float, float] = (0.0, 0.0)
    b_amp: Tuple[float, float] = (0.0, 0.0)
    b_freq: float = 0.0
    inverted: bool = False

    @classmethod
    def random(cls, rng: np.random.Generator, scale_m: float = 1.0e4, rate: float = 1.0e-5) -> "FrameChange":
        """滑らかなランダム変換（objectivity 検証用）"""
        return cls(
            theta0=float(rng.uniform(0, 2 * np.pi)),
            theta_rate=float(rng.uniform(-rate, rate)),
            theta_amp=float(rng.uniform(0, 0.5)),
            theta_freq=float(rng.uniform(0, rate)),
            b0=tuple(rng.uniform(-scale_m, scale_m, 2).tolist()),
            b_rate=tuple(rng.uniform(-0.1, 0.1, 2).tolist()),
            b_amp=tuple(rng.uniform(0, scale_m, 2).tolist()),
            b_freq=float(rng.uniform(0, rate)),
        )

    def inverse(self) -> "FrameChange":
        return replace(self, inverted=not self.inverted)

    def _base_angle(self, t: float) -> Tuple[float, float]:
        tau = t * SECONDS_PER_DAY
        theta = self.theta0 + self.theta_rate * tau + self.theta_amp * math.sin(self.theta_freq * tau)
        dtheta = self.theta_rate + self.theta_amp * self.theta_freq * math.cos(self.theta_freq * tau)
        return theta, dtheta

    def _base_translation(self, t: float) -> Tuple[np.ndarray, np.ndarray]:
        tau = t * SECONDS_PER_DAY
        b0, rate, amp = np.asarray(self.b0), np.asarray(self.b_rate), np.asarray(self.b_amp)
        b = b0 + rate * tau + amp * math.sin(self.b_freq * tau)
        db = rate + amp * self.b_freq * math.cos(self.b_freq * tau)
        return b, db

    def angle_rate(self, t: float) -> float:
        """回転角速度 θ̇ [rad/s]"""
        _, dtheta = self._base_angle(t)
        return -dtheta if self.inverted else dtheta

    def rotation(self, t: float) -> Tuple[np.ndarray, np.ndarray]:
        """(Q, Q̇)"""
        theta, dtheta = self._base_angle(t)
        Q = _rotation_matrix(theta)
        Qdot = dtheta * Q @ np.array([[0.0, -1.0], [1.0, 0.0]])
        if self.inverted:
            return Q.T, Qdot.T
        return Q, Qdot

    def translation(self, t: float) -> Tuple[np.ndarray, np.ndarray]:
        """(b, ḃ)"""
        b, db = self._base_translation(t)
        if not self.inverted:
            return b, db
        Q, Qdot = self.rotation(t)  # 逆変換の Q = 元の Qᵀ
        return -Q @ b, -(Qdot @ b + Q @ db)

    def to_original(self, points: np.ndarray, t: float) -> np.ndarray:
        """新座標 x̃ から元座標 x へ"""
        Q, _ = self.rotation(t)
        b, _ = self.translation(t)
        return points @ Q.T + b

    def to_frame(self, points: np.ndarray, t: float) -> np.ndarray:
        """元座標 x から新座標 x̃ へ"""
        Q, _ = self.rotation(t)
        b, _ = self.translation(t)
        return (points - b) @ Q


def _vortex_fields(
    x: np.ndarray, y: np.ndarray, t: float, p: Dict[str, Any], tau_d: Optional[float]
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """摂動渦1個の速度と勾配（中心からの相対座標 x, y）"""
    L2 = p["L"] ** 2
    rc = p["rc0"] * (1.0 + p["eps_p"] * math.sin(2.0 * math.pi * t / p["period"]))
    decay = math.exp(-t / tau_d) if tau_d else 1.0
    q = x * x + y * y
    E = np.exp(-q / L2)

    F = p["lam"] * (q / rc ** 2 - 1.0) * E
    dF = p["lam"] * E * (1.0 / rc ** 2 - (q / rc ** 2 - 1.0) / L2)
    G = p["omega0"] * decay * E
    dG = -G / L2

    m = 2.0 * p["amp"] * math.cos(p["nu"] * t)
    D = (x * x - y * y) / L2
    u = x * F - y * G + m * E * y * (1.0 + D)
    v = y * F + x * G + m * E * x * (1.0 - D)

    grad = np.empty(x.shape + (2, 2))
    grad[..., 0, 0] = F + 2 * x * x * dF - 2 * x * y * dG - 2 * m * E * x * y * D / L2
    grad[..., 0, 1] = (
        2 * x * y * dF - G - 2 * y * y * dG
        + m * E * ((1.0 + D) * (1.0 - 2 * y * y / L2) - 2 * y * y / L2)
    )
    grad[..., 1, 0] = (
        2 * x * y * dF + G + 2 * x * x * dG
        + m * E * ((1.0 - D) * (1.0 - 2 * x * x / L2) - 2 * x * x / L2)
    )
    grad[..., 1, 1] = F + 2 * y * y * dF + 2 * x * y * dG + 2 * m * E * x * y * D / L2
    return u, v, grad


def _gyre_fields(x: np.ndarray, y: np.ndarray, t: float, p: Dict[str, Any]):
    """非定常ダブルジャイア（領域 [0, 2L]×[0, L]）"""
    A, L = p["A"], p["L"]
    a = p["eps"] * math.sin(2.0 * math.pi * t / p["period"])
    b = 1.0 - 2.0 * a
    X, Y = x / L, y / L
    f = a * X * X + b * X
    df = 2 * a * X + b
    sf, cf = np.sin(np.pi * f), np.cos(np.pi * f)
    sy, cy = np.sin(np.pi * Y), np.cos(np.pi * Y)
    k = np.pi * A / L
    k2 = np.pi * A / L ** 2

    u = -k * sf * cy
    v = k * cf * df * sy
    grad = np.empty(x.shape + (2, 2))
    grad[..., 0, 0] = -np.pi * k2 * cf * df * cy
    grad[..., 0, 1] = np.pi * k2 * sf * sy
    grad[..., 1, 0] = k2 * (-np.pi * sf * df * df + cf * 2 * a) * sy
    grad[..., 1, 1] = np.pi * k2 * cf * df * cy
    return u, v, grad


def _vortex_centres(kind: str, p: Dict[str, Any]) -> List[Tuple[float, float, Optional[float]]]:
    """渦ごとの (中心x, 中心y, 減衰時間)"""
    if kind in ("perturbed_vortex", "decaying_vortex"):
        return [(p["x0"], p["y0"], p["tau_d"])]
    if kind == "two_vortex":
        half = 0.5 * p["separation"]
        return [(p["x0"] - half, p["y0"], p["tau_d"]), (p["x0"] + half, p["y0"], p["tau_d_second"])]
    count = int(p["count"])
    decays = p["tau_d"] if isinstance(p["tau_d"], (list, tuple)) else [p["tau_d"]] * count
    offset = 0.5 * (count - 1)
    return [(p["x0"] + (k - offset) * p["separation"], p["y0"], decays[k]) for k in range(count)]


def _normalize_decay(value: Any) -> Optional[float]:
    if value is None or value == "inf":
        return None
    value = float(value)
    return None if math.isinf(value) else value


@dataclass(frozen=True, eq=False)
class AnalyticFlow(FlowField):
    """
    解析的に評価できる流れ

    Args:
        kind: 流れの種類
        parameters: 種類ごとのパラメータ（省略分は既定値）
        extent: (xmin, xmax, ymin, ymax) [m]（None で種類ごとの既定）
        resolution: 基準格子幅 [m]（積分刻み・差分刻みの基準）
        time_step: 基準時間刻み [days]
        frames: 適用済みの座標変換（内側から順）
    """

    kind: str
    parameters: Dict[str, Any] = field(default_factory=dict)
    extent: Optional[Tuple[float, float, float, float]] = None
    resolution: float = 1000.0
    time_step: float = 0.1
    frames: Tuple[FrameChange, ...] = ()

    def __post_init__(self):
        if self.kind not in DEFAULT_PARAMETERS:
            raise ConfigError(f"unknown flow kind: {self.kind}")
        defaults = DEFAULT_PARAMETERS[self.kind]
        unknown = set(self.parameters) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown parameters for {self.kind}: {sorted(unknown)}")
        params = dict(defaults)
        params.update(self.parameters)
        if self.kind in VORTEX_KINDS:
            for key in ("L", "rc0", "period"):
                if params[key] <= 0:
                    raise ConfigError(f"{self.kind}.{key} must be positive")
            if "tau_d" in params and isinstance(params["tau_d"], (list, tuple)):
                params["tau_d"] = [_normalize_decay(d) for d in params["tau_d"]]
                if len(params["tau_d"]) != int(params["count"]):
                    raise ConfigError("multi_vortex.tau_d must list one decay time per vortex")
            else:
                params["tau_d"] = _normalize_decay(params["tau_d"])
            if "tau_d_second" in params:
                params["tau_d_second"] = _normalize_decay(params["tau_d_second"])
        if self.resolution <= 0 or self.time_step <= 0:
            raise ConfigError("resolution and time_step must be positive")
        object.__setattr__(self, "parameters", params)
        if self.extent is None:
            object.__setattr__(self, "extent", self._default_extent())
        xmin, xmax, ymin, ymax = self.extent
        if not (xmax > xmin and ymax > ymin):
            raise ConfigError(f"invalid extent: {self.extent}")

    def _default_extent(self) -> Tuple[float, float, float, float]:
        p = self.parameters
        if self.kind == "unsteady_gyre":
            return (0.0, 2.0 * p["L"], 0.0, p["L"])
        if self.kind in VORTEX_KINDS:
            centres = _vortex_centres(self.kind, p)
            xs = [c[0] for c in centres]
            pad = 3.0 * p["L"]
            return (min(xs) - pad, max(xs) + pad, p["y0"] - pad, p["y0"] + pad)
        return (-1.0e5, 1.0e5, -1.0e5, 1.0e5)

    @property
    def has_exact_gradient(self) -> bool:
        return True

    @property
    def has_exact_trajectories(self) -> bool:
        return self.kind in EXACT_TRAJECTORY_KINDS and not self.frames

    @property
    def is_steady(self) -> bool:
        p = self.parameters
        if self.frames:
            return False
        if self.kind == "unsteady_gyre":
            return p["eps"] == 0.0
        if self.kind in VORTEX_KINDS:
            decays = [c[2] for c in _vortex_centres(self.kind, p)]
            return p["nu"] == 0.0 and p["eps_p"] == 0.0 and all(d is None for d in decays)
        return True

    # --- 元座標系での評価 ---

    def _base_fields(self, pts: np.ndarray, t: float) -> Tuple[np.ndarray, np.ndarray]:
        x, y = pts[:, 0], pts[:, 1]
        p = self.parameters
        vel = np.zeros_like(pts)
        grad = np.zeros((pts.shape[0], 2, 2))
        if self.kind == "solid_rotation":
            vel[:, 0], vel[:, 1] = -p["omega"] * y, p["omega"] * x
            grad[:, 0, 1], grad[:, 1, 0] = -p["omega"], p["omega"]
        elif self.kind == "pure_shear":
            vel[:, 0] = p["gamma"] * y
            grad[:, 0, 1] = p["gamma"]
        elif self.kind == "pure_strain":
            vel[:, 0], vel[:, 1] = p["alpha"] * x, -p["alpha"] * y
            grad[:, 0, 0], grad[:, 1, 1] = p["alpha"], -p["alpha"]
        elif self.kind == "uniform":
            vel[:, 0], vel[:, 1] = p["U"], p["V"]
        elif self.kind == "unsteady_gyre":
            vel[:, 0], vel[:, 1], grad[:] = _gyre_fields(x, y, t, p)
        else:
            for cx, cy, tau_d in _vortex_centres(self.kind, p):
                u, v, g = _vortex_fields(x - cx, y - cy, t, p, tau_d)
                vel[:, 0] += u
                vel[:, 1] += v
                grad += g
        return vel, grad

    def _fields(self, pts: np.ndarray, t: float, depth: int) -> Tuple[np.ndarray, np.ndarray]:
        """depth 個の座標変換を適用した速度と勾配"""
        if depth == 0:
            return self._base_fields(pts, t)
        fc = self.frames[depth - 1]
        Q, Qdot = fc.rotation(t)
        b, bdot = fc.translation(t)
        outer = pts @ Q.T + b
        vel, grad = self._fields(outer, t, depth - 1)
        new_vel = (vel - pts @ Qdot.T - bdot) @ Q
        new_grad = np.einsum("ji,njk->nik", Q, grad @ Q - Qdot)
        return new_vel, new_grad

    def _to_base(self, pts: np.ndarray, t: float) -> np.ndarray:
        for fc in reversed(self.frames):
            pts = fc.to_original(pts, t)
        return pts

    # --- FlowField ---

    def evaluate(self, points: Any, t: float) -> Tuple[np.ndarray, np.ndarray]:
        """領域判定なしで速度と勾配を評価"""
        pts, single = as_points(points)
        vel, grad = self._fields(pts, t, len(self.frames))
        if single:
            return vel[0], grad[0]
        return vel, grad

    def contains(self, points: Any, margin_m: float = 0.0, t: float = 0.0) -> np.ndarray:
        pts, _ = as_points(points)
        base = self._to_base(pts, t) if self.frames else pts
        xmin, xmax, ymin, ymax = self.extent
        return (
            (base[:, 0] >= xmin + margin_m)
            & (base[:, 0] <= xmax - margin_m)
            & (base[:, 1] >= ymin + margin_m)
            & (base[:, 1] <= ymax - margin_m)
        )

    def _check_inside(self, pts: np.ndarray, t: float) -> None:
        base = self._to_base(pts, t) if self.frames else pts
        xmin, xmax, ymin, ymax = self.extent
        inside = (
            (base[:, 0] >= xmin) & (base[:, 0] <= xmax) & (base[:, 1] >= ymin) & (base[:, 1] <= ymax)
        )
        if not np.all(inside):
            bad = pts[~inside][0]
            raise DomainError(f"position ({bad[0]:.6g}, {bad[1]:.6g}) outside the {self.kind} extent")

    def velocity(self, points: Any, t: float) -> np.ndarray:
        pts, single = as_points(points)
        self._check_inside(pts, t)
        vel, _ = self._fields(pts, t, len(self.frames))
        return vel[0] if single else vel

    def velocity_gradient(self, points: Any, t: float) -> np.ndarray:
        pts, single = as_points(points)
        self._check_inside(pts, t)
        _, grad = self._fields(pts, t, len(self.frames))
        return grad[0] if single else grad

    def strain_rate_derivative(
        self, points: Any, t: float, dt_back: Optional[float] = None
    ) -> np.ndarray:
        pts, single = as_points(points)
        if self.is_steady:
            out = np.zeros((pts.shape[0], 2, 2))
            return out[0] if single else out
        depth = len(self.frames)
        if dt_back:
            later, earlier, span = t, t - dt_back, dt_back
        else:
            later, earlier, span = t + ANALYTIC_DT_DAYS, t - ANALYTIC_DT_DAYS, 2 * ANALYTIC_DT_DAYS
        S1 = decompose_gradient(self._fields(pts, later, depth)[1]).S
        S0 = decompose_gradient(self._fields(pts, earlier, depth)[1]).S
        out = (S1 - S0) / (span * SECONDS_PER_DAY)
        return out[0] if single else out

    def metric(self, points: Any) -> np.ndarray:
        pts, _ = as_points(points)
        return np.ones_like(pts)

    @property
    def time_span(self) -> Tuple[float, float]:
        return (-np.inf, np.inf)

    @property
    def cell_size(self) -> float:
        return self.resolution

    @property
    def extent_m(self) -> Tuple[float, float]:
        xmin, xmax, ymin, ymax = self.extent
        return (xmax - xmin, ymax - ymin)

    @property
    def native_time_step(self) -> float:
        return self.time_step

    def lattice_axes(self) -> Tuple[np.ndarray, np.ndarray]:
        xmin, xmax, ymin, ymax = self.extent
        res = self.resolution
        xs = np.arange(xmin, xmax + 0.5 * res, res)[1:-1]
        ys = np.arange(ymin, ymax + 0.5 * res, res)[1:-1]
        return xs, ys

    def mean_vorticity(self, t: float) -> float:
        """extent 上の台形則による領域平均渦度（座標変換分は -2θ̇ を加える）"""
        xmin, xmax, ymin, ymax = self.extent
        xs = np.linspace(xmin, xmax, MEAN_VORTICITY_SAMPLES)
        ys = np.linspace(ymin, ymax, MEAN_VORTICITY_SAMPLES)
        X, Y = np.meshgrid(xs, ys)
        _, grad = self._base_fields(np.column_stack([X.ravel(), Y.ravel()]), t)
        omega = (grad[:, 1, 0] - grad[:, 0, 1]).reshape(X.shape)
        w = np.outer(trapezoid_weights(ys.size), trapezoid_weights(xs.size))
        mean = float(np.sum(w * omega) / np.sum(w))
        return mean - 2.0 * sum(fc.angle_rate(t) for fc in self.frames)

    def trajectory(self, points: Any, t0: float, t1: float) -> np.ndarray:
        """厳密な流跡線の終点（EXACT_TRAJECTORY_KINDS のみ）"""
        if not self.has_exact_trajectories:
            raise ValueError(f"{self.kind} has no closed-form trajectories")
        pts, single = as_points(points)
        dt = (t1 - t0) * SECONDS_PER_DAY
        p = self.parameters
        x, y = pts[:, 0], pts[:, 1]
        if self.kind == "solid_rotation":
            out = pts @ _rotation_matrix(p["omega"] * dt).T
        elif self.kind == "pure_shear":
            out = np.column_stack([x + p["gamma"] * y * dt, y])
        elif self.kind == "pure_strain":
            out = np.column_stack([x * math.exp(p["alpha"] * dt), y * math.exp(-p["alpha"] * dt)])
        else:
            out = np.column_stack([x + p["U"] * dt, y + p["V"] * dt])
        return out[0] if single else out

    def ring_radius(self, t: float) -> float:
        """μ = 0 の円形サイクル半径 rc(t)（摂動渦系のみ）"""
        p = self.parameters
        return p["rc0"] * (1.0 + p["eps_p"] * math.sin(2.0 * math.pi * t / p["period"]))

    def ring_radius_rate(self, t: float) -> float:
        """ṙc [m/s]"""
        p = self.parameters
        omega = 2.0 * math.pi / p["period"]
        return p["rc0"] * p["eps_p"] * omega * math.cos(omega * t) / SECONDS_PER_DAY

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "parameters": self.parameters,
            "extent": list(self.extent),
            "resolution": self.resolution,
            "time_step": self.time_step,
        }


def evaluate(flow: AnalyticFlow, x: Any, t: float, with_gradient: bool = False):
    """
    解析流れの速度（と厳密勾配）

    Returns:
        with_gradient=False なら速度、True なら (速度, 勾配)
    """
    vel, grad = flow.evaluate(x, t)
    if with_gradient:
        return vel, grad
    return vel


def transform(flow: AnalyticFlow, fc: FrameChange) -> AnalyticFlow:
    """新しい座標系で見た流れ ṽ = Qᵀ(v(Qx̃ + b) - Q̇x̃ - ḃ)"""
    return replace(flow, frames=flow.frames + (fc,))


def rasterize(flow: AnalyticFlow, grid: GridSpec, times: Sequence[float]) -> VelocityDataset:
    """
    格子上にサンプリングして VelocityDataset を生成

    Args:
        flow: 解析流れ
        grid: cartesian 格子
        times: 時刻 [days]
    """
    if grid.is_geographic:
        raise ConfigError("analytic flows rasterize onto cartesian grids only")
    X, Y = np.meshgrid(grid.lons, grid.lats)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    times = np.asarray(times, dtype=float)
    u = np.empty((times.size, grid.ny, grid.nx))
    v = np.empty_like(u)
    for k, t in enumerate(times):
        vel, _ = flow.evaluate(pts, float(t))
        u[k] = vel[:, 0].reshape(X.shape)
        v[k] = vel[:, 1].reshape(X.shape)
    logger.info(
        f"event=flow_rasterized kind={flow.kind} nt={times.size} ny={grid.ny} nx={grid.nx}"
    )
    return VelocityDataset(grid=grid, times=times, u=u, v=v)


def load_flow_spec(path: Path) -> AnalyticFlow:
    """JSON {kind, parameters, extent?, resolution?, time_step?} から流れを生成"""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"flow spec not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            spec = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"flow spec is not valid JSON: {e}") from e
    if "kind" not in spec:
        raise ConfigError("flow spec requires 'kind'")
    extent = spec.get("extent")
    return AnalyticFlow(
        kind=spec["kind"],
        parameters=spec.get("parameters", {}),
        extent=tuple(extent) if extent else None,
        resolution=float(spec.get("resolution", 1000.0)),
        time_step=float(spec.get("time_step", 0.1)),
    )


def load_grid_spec(path: Path) -> Tuple[GridSpec, np.ndarray]:
    """JSON {grid: {...}, times: [...]} から格子と時刻を読む"""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"grid spec not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        spec = json.load(f)
    try:
        grid = GridSpec.from_dict(spec["grid"])
        times = np.asarray(spec["times"], dtype=float)
    except KeyError as e:
        raise ConfigError(f"grid spec is missing key {e}") from e
    return grid, times
