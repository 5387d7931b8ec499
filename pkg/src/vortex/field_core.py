#!/usr/bin/env python3
"""
格子速度場の保持・補間・微分

機能:
- データセットマニフェストの読み書き（生の little-endian float64, [t][y][x]）
- 空間は双三次、時間は線形の補間
- ひずみ速度テンソル S とスピンテンソル W への分解、固有値・固有ベクトル場
- 渦度・OW・PV・|∇PV| の格子診断量
- SSH からの地衡流変換
- ∂ₜS の後退差分
"""

import json
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy.interpolate import RectBivariateSpline

from src.vortex.detection_rules import (
    EQUATORIAL_EXCLUSION_DEG,
    FD_STEP_CELLS,
    PHYSICAL_CONSTANTS,
    PV_LABEL,
    SECONDS_PER_DAY,
)
from src.vortex.exceptions import DataError, DomainError, InsufficientHistoryError

logger = logging.getLogger(__name__)

COORDINATE_MODES = ("geographic", "cartesian")
PROVENANCES = ("direct", "from_ssh")

# 90度反時計回り回転
ROTATION = np.array([[0.0, -1.0], [1.0, 0.0]])


def as_points(points: Any) -> Tuple[np.ndarray, bool]:
    """(2,) または (N, 2) を (N, 2) に揃え、単一点だったかを返す"""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        return arr.reshape(1, 2), True
    return arr.reshape(-1, 2), False


def rotate90(vectors: np.ndarray) -> np.ndarray:
    """ベクトルを90度反時計回りに回転（R v）"""
    vec = np.asarray(vectors, dtype=float)
    return np.stack([-vec[..., 1], vec[..., 0]], axis=-1)


@dataclass(frozen=True)
class GridSpec:
    """格子仕様（geographic: 度単位の経緯度, cartesian: メートル）"""

    nx: int
    ny: int
    lon0: float
    lat0: float
    dlon: float
    dlat: float
    coordinate_mode: str = "geographic"
    earth_radius: float = PHYSICAL_CONSTANTS["earth_radius"]

    def __post_init__(self):
        if self.nx < 4 or self.ny < 4:
            raise DataError(f"grid must be at least 4x4, got nx={self.nx}, ny={self.ny}")
        if not (self.dlon > 0 and self.dlat > 0):
            raise DataError(f"grid spacing must be positive, got dlon={self.dlon}, dlat={self.dlat}")
        if self.coordinate_mode not in COORDINATE_MODES:
            raise DataError(f"unknown coordinate mode: {self.coordinate_mode}")
        if self.is_geographic:
            if not (-90.0 < self.lat0 and self.lat_max < 90.0):
                raise DataError(
                    f"latitudes must lie strictly inside (-90, 90): [{self.lat0}, {self.lat_max}]"
                )
            if self.earth_radius <= 0:
                raise DataError("earth_radius must be positive")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GridSpec":
        """マニフェストの grid セクションから生成"""
        try:
            return cls(
                nx=int(data["nx"]),
                ny=int(data["ny"]),
                lon0=float(data["lon0"]),
                lat0=float(data["lat0"]),
                dlon=float(data["dlon"]),
                dlat=float(data["dlat"]),
                coordinate_mode=data.get("mode", "geographic"),
                earth_radius=float(data.get("earth_radius", PHYSICAL_CONSTANTS["earth_radius"])),
            )
        except KeyError as e:
            raise DataError(f"grid definition is missing key {e}") from e

    def to_dict(self) -> Dict[str, Any]:
        return {
            "nx": self.nx,
            "ny": self.ny,
            "lon0": self.lon0,
            "lat0": self.lat0,
            "dlon": self.dlon,
            "dlat": self.dlat,
            "mode": self.coordinate_mode,
            "earth_radius": self.earth_radius,
        }

    @property
    def is_geographic(self) -> bool:
        return self.coordinate_mode == "geographic"

    @property
    def lon_max(self) -> float:
        return self.lon0 + self.dlon * (self.nx - 1)

    @property
    def lat_max(self) -> float:
        return self.lat0 + self.dlat * (self.ny - 1)

    @property
    def lons(self) -> np.ndarray:
        return self.lon0 + self.dlon * np.arange(self.nx)

    @property
    def lats(self) -> np.ndarray:
        return self.lat0 + self.dlat * np.arange(self.ny)

    def metric(self, lat: Any) -> Tuple[np.ndarray, np.ndarray]:
        """座標1単位あたりのメートル数 (mx, my)"""
        lat = np.asarray(lat, dtype=float)
        if not self.is_geographic:
            ones = np.ones_like(lat)
            return ones, ones
        deg = np.pi / 180.0
        mx = self.earth_radius * np.cos(lat * deg) * deg
        my = np.full_like(lat, self.earth_radius * deg)
        return mx, my

    def spacing_m(self) -> Tuple[np.ndarray, float]:
        """行ごとの x 方向格子幅 (ny, 1) と y 方向格子幅 [m]"""
        mx, my = self.metric(self.lats)
        return (mx * self.dlon).reshape(-1, 1), float(my[0] * self.dlat)

    @property
    def cell_size(self) -> float:
        """最小の物理格子幅 [m]"""
        dx, dy = self.spacing_m()
        return float(min(dx.min(), dy))

    @property
    def extent_m(self) -> Tuple[float, float]:
        """領域の物理サイズ（中央緯度の計量）[m]"""
        mx, my = self.metric(0.5 * (self.lat0 + self.lat_max))
        return (
            float(mx * (self.lon_max - self.lon0)),
            float(my * (self.lat_max - self.lat0)),
        )


class FlowField(ABC):
    """速度場の共通インターフェース（格子データと解析流れの両方が実装する）"""

    coordinate_mode: str = "cartesian"

    @abstractmethod
    def velocity(self, points: Any, t: float) -> np.ndarray:
        """速度 [m/s]"""

    @abstractmethod
    def velocity_gradient(self, points: Any, t: float) -> np.ndarray:
        """速度勾配 G[i, j] = ∂v_i/∂x_j [1/s]"""

    @abstractmethod
    def strain_rate_derivative(
        self, points: Any, t: float, dt_back: Optional[float] = None
    ) -> np.ndarray:
        """∂ₜS [1/s²]"""

    @abstractmethod
    def contains(self, points: Any, margin_m: float = 0.0, t: float = 0.0) -> np.ndarray:
        """点が領域内（境界から margin_m 以上内側）にあるか"""

    @abstractmethod
    def metric(self, points: Any) -> np.ndarray:
        """座標1単位あたりのメートル数 (N, 2)"""

    @abstractmethod
    def mean_vorticity(self, t: float) -> float:
        """領域平均渦度 ω̄ [1/s]"""

    @property
    @abstractmethod
    def time_span(self) -> Tuple[float, float]:
        """有効な時間範囲 [days]"""

    @property
    @abstractmethod
    def cell_size(self) -> float:
        """基準となる最小格子幅 [m]"""

    @property
    @abstractmethod
    def extent_m(self) -> Tuple[float, float]:
        """領域の物理サイズ [m]"""

    @property
    @abstractmethod
    def native_time_step(self) -> float:
        """データの時間間隔 [days]"""

    @abstractmethod
    def lattice_axes(self) -> Tuple[np.ndarray, np.ndarray]:
        """差分ステンシルが領域内に収まる標本格子の軸 (xs, ys)"""

    @property
    def is_steady(self) -> bool:
        return False

    @property
    def has_exact_gradient(self) -> bool:
        """速度勾配が解析的に与えられるか（補間データは False）"""
        return False

    @property
    def domain_perimeter(self) -> float:
        lx, ly = self.extent_m
        return 2.0 * (lx + ly)

    def to_plane(self, points: Any, origin: Any) -> np.ndarray:
        """origin を原点とする局所接平面座標 [m] に変換"""
        pts, _ = as_points(points)
        origin = np.asarray(origin, dtype=float).reshape(1, 2)
        return (pts - origin) * self.metric(origin)

    def from_plane(self, plane: Any, origin: Any) -> np.ndarray:
        """局所接平面座標 [m] から元の座標へ戻す"""
        pln, _ = as_points(plane)
        origin = np.asarray(origin, dtype=float).reshape(1, 2)
        return origin + pln / self.metric(origin)

    def displace(self, points: Any, vectors_m: Any) -> np.ndarray:
        """物理ベクトル [m] だけ点を移動"""
        pts, _ = as_points(points)
        vec = np.asarray(vectors_m, dtype=float).reshape(-1, 2)
        return pts + vec / self.metric(pts)

    def segment_vectors(self, start: Any, end: Any) -> np.ndarray:
        """start→end の物理ベクトル [m]（中点の計量）"""
        a, _ = as_points(start)
        b, _ = as_points(end)
        return (b - a) * self.metric(0.5 * (a + b))


@dataclass(frozen=True)
class StrainAnalysis:
    """ひずみ・スピン分解の結果（単一点なら S は (2, 2)、複数点なら (N, 2, 2)）"""

    S: np.ndarray
    W: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    omega: np.ndarray


def eigen_frame(S: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    対称2x2テンソルの固有値・固有ベクトル

    Returns:
        (s1, s2, e1, e2)。s1 <= s2、e2 = R e1。
    """
    a = S[..., 0, 0]
    b = 0.5 * (S[..., 0, 1] + S[..., 1, 0])
    d = S[..., 1, 1]
    mean = 0.5 * (a + d)
    radius = np.hypot(0.5 * (a - d), b)
    theta2 = 0.5 * np.arctan2(2.0 * b, a - d)
    e2 = np.stack([np.cos(theta2), np.sin(theta2)], axis=-1)
    e1 = np.stack([np.sin(theta2), -np.cos(theta2)], axis=-1)
    return mean - radius, mean + radius, e1, e2


def decompose_gradient(G: np.ndarray) -> StrainAnalysis:
    """速度勾配を S, W に分解し固有フレームと渦度を付ける"""
    G = np.asarray(G, dtype=float)
    Gt = np.swapaxes(G, -1, -2)
    S = 0.5 * (G + Gt)
    W = 0.5 * (G - Gt)
    s1, s2, e1, e2 = eigen_frame(S)
    omega = G[..., 1, 0] - G[..., 0, 1]
    return StrainAnalysis(S=S, W=W, s1=s1, s2=s2, e1=e1, e2=e2, omega=omega)


def grid_derivative(values: np.ndarray, axis: int) -> np.ndarray:
    """
    添字方向の微分（単位間隔）

    内部は4次精度中心差分、境界から2セル以内は2次精度片側差分。
    """
    g = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    n = g.shape[0]
    if n < 4:
        raise DataError(f"need at least 4 samples along axis {axis}, got {n}")
    d = np.empty_like(g)
    if n >= 5:
        d[2:-2] = (-g[4:] + 8.0 * g[3:-1] - 8.0 * g[1:-3] + g[:-4]) / 12.0
    d[0] = (-3.0 * g[0] + 4.0 * g[1] - g[2]) / 2.0
    d[1] = (-3.0 * g[1] + 4.0 * g[2] - g[3]) / 2.0
    d[-1] = (3.0 * g[-1] - 4.0 * g[-2] + g[-3]) / 2.0
    d[-2] = (3.0 * g[-2] - 4.0 * g[-3] + g[-4]) / 2.0
    return np.moveaxis(d, 0, axis)


def _validate_time_axis(times: np.ndarray) -> None:
    if times.ndim != 1 or times.size == 0:
        raise DataError("times must be a non-empty 1-D array")
    if not np.all(np.isfinite(times)):
        raise DataError("times contain non-finite values")
    if times.size > 1 and not np.all(np.diff(times) > 0):
        raise DataError(f"times must be strictly increasing: {times.tolist()}")


def _validate_samples(name: str, values: np.ndarray, shape: Tuple[int, int, int]) -> None:
    if values.shape != shape:
        raise DataError(f"{name} has shape {values.shape}, expected {shape} (nt, ny, nx)")
    bad = int(np.count_nonzero(~np.isfinite(values)))
    if bad:
        raise DataError(f"{name} contains {bad} non-finite samples")


@dataclass(frozen=True, eq=False)
class VelocityDataset(FlowField):
    """時刻付き格子速度場"""

    grid: GridSpec
    times: np.ndarray
    u: np.ndarray
    v: np.ndarray
    provenance: str = "direct"
    dt_back: Optional[float] = None
    _splines: Tuple[Any, ...] = field(init=False, repr=False, compare=False, default=())

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        u = np.asarray(self.u, dtype=float)
        v = np.asarray(self.v, dtype=float)
        _validate_time_axis(times)
        shape = (times.size, self.grid.ny, self.grid.nx)
        _validate_samples("u", u, shape)
        _validate_samples("v", v, shape)
        if self.provenance not in PROVENANCES:
            raise DataError(f"unknown provenance: {self.provenance}")
        if self.dt_back is not None and self.dt_back <= 0:
            raise DataError("dt_back must be positive")

        for arr in (times, u, v):
            arr.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        splines = tuple(
            (
                RectBivariateSpline(self.grid.lats, self.grid.lons, u[k], kx=3, ky=3, s=0),
                RectBivariateSpline(self.grid.lats, self.grid.lons, v[k], kx=3, ky=3, s=0),
            )
            for k in range(times.size)
        )
        object.__setattr__(self, "_splines", splines)

    @property
    def coordinate_mode(self) -> str:
        return self.grid.coordinate_mode

    @property
    def nt(self) -> int:
        return int(self.times.size)

    @property
    def is_steady(self) -> bool:
        return self.nt == 1

    @property
    def time_span(self) -> Tuple[float, float]:
        if self.is_steady:
            return (-np.inf, np.inf)
        return (float(self.times[0]), float(self.times[-1]))

    @property
    def native_time_step(self) -> float:
        if self.is_steady:
            return 1.0
        return float(np.median(np.diff(self.times)))

    @property
    def cell_size(self) -> float:
        return self.grid.cell_size

    @property
    def extent_m(self) -> Tuple[float, float]:
        return self.grid.extent_m

    def lattice_axes(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.grid.lons[1:-1], self.grid.lats[1:-1]

    def with_time_step(self, dt_back: Optional[float]) -> "VelocityDataset":
        """∂ₜS の後退差分刻みを差し替えたコピー"""
        return VelocityDataset(
            grid=self.grid,
            times=self.times,
            u=self.u,
            v=self.v,
            provenance=self.provenance,
            dt_back=dt_back,
        )

    def metric(self, points: Any) -> np.ndarray:
        pts, _ = as_points(points)
        mx, my = self.grid.metric(pts[:, 1])
        return np.stack([mx, my], axis=-1)

    def contains(self, points: Any, margin_m: float = 0.0, t: float = 0.0) -> np.ndarray:
        pts, _ = as_points(points)
        metric = self.metric(pts)
        mx = margin_m / metric[:, 0]
        my = margin_m / metric[:, 1]
        tol_x = 1e-9 * self.grid.dlon
        tol_y = 1e-9 * self.grid.dlat
        return (
            (pts[:, 0] >= self.grid.lon0 + mx - tol_x)
            & (pts[:, 0] <= self.grid.lon_max - mx + tol_x)
            & (pts[:, 1] >= self.grid.lat0 + my - tol_y)
            & (pts[:, 1] <= self.grid.lat_max - my + tol_y)
        )

    def time_bracket(self, t: float) -> Tuple[int, int, float]:
        """時刻 t を挟むスナップショット添字と線形補間の重み"""
        if self.is_steady:
            return 0, 0, 0.0
        tol = 1e-9 * max(1.0, float(self.times[-1] - self.times[0]))
        if t < self.times[0] - tol or t > self.times[-1] + tol:
            raise DomainError(
                f"time {t} outside data span [{self.times[0]}, {self.times[-1]}]"
            )
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        k = min(max(k, 0), self.nt - 2)
        w = (t - self.times[k]) / (self.times[k + 1] - self.times[k])
        return k, k + 1, float(min(max(w, 0.0), 1.0))

    def _evaluate(self, pts: np.ndarray, t: float) -> np.ndarray:
        k0, k1, w = self.time_bracket(t)
        su0, sv0 = self._splines[k0]
        out = np.stack([su0.ev(pts[:, 1], pts[:, 0]), sv0.ev(pts[:, 1], pts[:, 0])], axis=-1)
        if w > 0.0:
            su1, sv1 = self._splines[k1]
            later = np.stack([su1.ev(pts[:, 1], pts[:, 0]), sv1.ev(pts[:, 1], pts[:, 0])], axis=-1)
            out = (1.0 - w) * out + w * later
        return out

    def velocity(self, points: Any, t: float) -> np.ndarray:
        pts, single = as_points(points)
        inside = self.contains(pts)
        if not np.all(inside):
            bad = pts[~inside][0]
            raise DomainError(f"position ({bad[0]:.6g}, {bad[1]:.6g}) outside the grid")
        out = self._evaluate(pts, t)
        return out[0] if single else out

    def velocity_gradient(self, points: Any, t: float) -> np.ndarray:
        pts, single = as_points(points)
        hx = FD_STEP_CELLS * self.grid.dlon
        hy = FD_STEP_CELLS * self.grid.dlat
        offsets = np.array([[hx, 0.0], [-hx, 0.0], [0.0, hy], [0.0, -hy]])
        stencil = (pts[:, None, :] + offsets[None, :, :]).reshape(-1, 2)
        inside = self.contains(stencil).reshape(-1, 4).all(axis=1)
        if not np.all(inside):
            bad = pts[~inside][0]
            raise DomainError(
                f"finite-difference stencil at ({bad[0]:.6g}, {bad[1]:.6g}) leaves the grid"
            )
        vel = self._evaluate(stencil, t).reshape(-1, 4, 2)
        metric = self.metric(pts)
        G = np.empty((pts.shape[0], 2, 2))
        G[:, :, 0] = (vel[:, 0] - vel[:, 1]) / (2.0 * hx * metric[:, 0:1])
        G[:, :, 1] = (vel[:, 2] - vel[:, 3]) / (2.0 * hy * metric[:, 1:2])
        return G[0] if single else G

    def strain_rate_derivative(
        self, points: Any, t: float, dt_back: Optional[float] = None
    ) -> np.ndarray:
        pts, single = as_points(points)
        if self.is_steady:
            out = np.zeros((pts.shape[0], 2, 2))
            return out[0] if single else out
        dt = dt_back or self.dt_back or self.native_time_step
        tol = 1e-9 * max(1.0, float(self.times[-1] - self.times[0]))
        if t - dt < self.times[0] - tol:
            raise InsufficientHistoryError(
                f"dS/dt at t={t} needs data at t-{dt}; advance the start time to at least "
                f"{self.times[0] + dt}"
            )
        now = decompose_gradient(self.velocity_gradient(pts, t)).S
        before = decompose_gradient(self.velocity_gradient(pts, t - dt)).S
        out = (now - before) / (dt * SECONDS_PER_DAY)
        return out[0] if single else out

    def snapshot(self, t: float) -> Tuple[np.ndarray, np.ndarray]:
        """時刻 t の格子速度（スナップショット間は線形補間）"""
        k0, k1, w = self.time_bracket(t)
        u = (1.0 - w) * self.u[k0] + w * self.u[k1]
        v = (1.0 - w) * self.v[k0] + w * self.v[k1]
        return u, v

    def mean_vorticity(self, t: float) -> float:
        return diagnostics(self, t).omega_mean


def sample_velocity(ds: FlowField, x: Any, t: float) -> np.ndarray:
    """位置 x・時刻 t の速度 [m/s]"""
    return ds.velocity(x, t)


def strain_analysis(ds: FlowField, x: Any, t: float) -> StrainAnalysis:
    """位置 x・時刻 t の S, W, 固有値・固有ベクトル, 渦度"""
    return decompose_gradient(ds.velocity_gradient(x, t))


def dS_dt(ds: FlowField, x: Any, t: float, dt_back: Optional[float] = None) -> np.ndarray:
    """ひずみ速度テンソルの時間微分（後退差分）[1/s²]"""
    return ds.strain_rate_derivative(x, t, dt_back)


def lattice_strain(ds: FlowField, t: float) -> Tuple[np.ndarray, np.ndarray, StrainAnalysis]:
    """
    標本格子上のひずみ解析

    Returns:
        (xs, ys, 解析結果)。解析結果の各配列は (ny, nx) 形状。
    """
    xs, ys = ds.lattice_axes()
    X, Y = np.meshgrid(xs, ys)
    G = ds.velocity_gradient(np.column_stack([X.ravel(), Y.ravel()]), t)
    parts = decompose_gradient(G.reshape(X.shape + (2, 2)))
    return xs, ys, parts


@dataclass(frozen=True, eq=False)
class DiagnosticFields:
    """格子上の比較用診断量"""

    grid: GridSpec
    time: float
    ow: np.ndarray
    pv: np.ndarray
    grad_pv_mag: np.ndarray
    omega: np.ndarray
    omega_mean: float
    s11: np.ndarray
    s12: np.ndarray
    s22: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    pv_label: str = PV_LABEL

    @property
    def strain_scale(self) -> float:
        """max(|s1|, |s2|) の格子中央値"""
        return float(np.median(np.maximum(np.abs(self.s1), np.abs(self.s2))))


def trapezoid_weights(n: int) -> np.ndarray:
    w = np.ones(n)
    w[0] = w[-1] = 0.5
    return w


def gradient_on_grid(grid: GridSpec, values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """格子スカラー場の (∂x, ∂y) [1/m]"""
    dx, dy = grid.spacing_m()
    return grid_derivative(values, axis=-1) / dx, grid_derivative(values, axis=-2) / dy


def diagnostics(ds: VelocityDataset, t: float) -> DiagnosticFields:
    """
    時刻 t の OW, PV, |∇PV|, 領域平均渦度

    OW = s2² - (ω/2)²、PV は geographic で ω + f、cartesian で ω。
    """
    grid = ds.grid
    u, v = ds.snapshot(t)
    du_dx, du_dy = gradient_on_grid(grid, u)
    dv_dx, dv_dy = gradient_on_grid(grid, v)

    G = np.stack(
        [np.stack([du_dx, du_dy], axis=-1), np.stack([dv_dx, dv_dy], axis=-1)], axis=-2
    )
    parts = decompose_gradient(G)
    omega = parts.omega
    ow = parts.s2 ** 2 - (0.5 * omega) ** 2

    if grid.is_geographic:
        f = 2.0 * PHYSICAL_CONSTANTS["omega"] * np.sin(np.radians(grid.lats)).reshape(-1, 1)
        pv = omega + f
    else:
        pv = omega.copy()
    dpv_dx, dpv_dy = gradient_on_grid(grid, pv)

    weights = np.outer(trapezoid_weights(grid.ny), trapezoid_weights(grid.nx))
    if grid.is_geographic:
        weights = weights * np.cos(np.radians(grid.lats)).reshape(-1, 1)
    omega_mean = float(np.sum(weights * omega) / np.sum(weights))

    return DiagnosticFields(
        grid=grid,
        time=float(t),
        ow=ow,
        pv=pv,
        grad_pv_mag=np.hypot(dpv_dx, dpv_dy),
        omega=omega,
        omega_mean=omega_mean,
        s11=parts.S[..., 0, 0],
        s12=parts.S[..., 0, 1],
        s22=parts.S[..., 1, 1],
        s1=parts.s1,
        s2=parts.s2,
    )


def ow_regions(diag: DiagnosticFields, alpha: float) -> np.ndarray:
    """OW < -α·std(OW) の格子マスク"""
    threshold = -alpha * float(np.std(diag.ow))
    return diag.ow < threshold


@dataclass(frozen=True, eq=False)
class SshDataset:
    """海面高度 h の格子データ"""

    grid: GridSpec
    times: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        h = np.asarray(self.h, dtype=float)
        _validate_time_axis(times)
        _validate_samples("ssh", h, (times.size, self.grid.ny, self.grid.nx))
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "h", h)


def geostrophic_from_ssh(
    ssh: SshDataset,
    g: float = PHYSICAL_CONSTANTS["g"],
    omega: float = PHYSICAL_CONSTANTS["omega"],
    earth_radius: Optional[float] = None,
    f_constant: Optional[float] = None,
) -> VelocityDataset:
    """
    SSH から地衡流速度 [m/s] を求める

    u = -g/(f R) ∂θh, v = g/(f R cosθ) ∂φh（局所接平面の線形速度）。

    Args:
        ssh: SSHデータ（geographic 格子）
        g: 重力加速度
        omega: 自転角速度
        earth_radius: 地球半径（None なら格子の値）
        f_constant: f 平面近似で使う一定のコリオリパラメータ

    Raises:
        DataError: 格子が cartesian、または赤道除外帯にかかる場合
    """
    grid = ssh.grid
    if not grid.is_geographic:
        raise DataError("geostrophic conversion requires a geographic grid")
    min_abs_lat = float(np.min(np.abs(grid.lats)))
    if f_constant is None and min_abs_lat < EQUATORIAL_EXCLUSION_DEG:
        raise DataError(
            f"grid reaches latitude {min_abs_lat:.3f}, inside the equatorial exclusion band "
            f"|lat| < {EQUATORIAL_EXCLUSION_DEG}"
        )
    radius = earth_radius or grid.earth_radius
    theta = np.radians(grid.lats).reshape(1, -1, 1)
    dh_dtheta = grid_derivative(ssh.h, axis=1) / np.radians(grid.dlat)
    dh_dphi = grid_derivative(ssh.h, axis=2) / np.radians(grid.dlon)
    f = f_constant if f_constant is not None else 2.0 * omega * np.sin(theta)

    u = -g / (f * radius) * dh_dtheta
    v = g / (f * radius * np.cos(theta)) * dh_dphi
    logger.info(
        f"event=geostrophic_conversion nt={ssh.times.size} ny={grid.ny} nx={grid.nx} "
        f"min_abs_lat={min_abs_lat:.3f}"
    )
    return VelocityDataset(grid=grid, times=ssh.times, u=u, v=v, provenance="from_ssh")


def write_manifest(
    directory: Path,
    grid: GridSpec,
    times: np.ndarray,
    arrays: Dict[str, np.ndarray],
    units: Optional[Dict[str, str]] = None,
    constants: Optional[Dict[str, float]] = None,
) -> Path:
    """
    マニフェストと生データファイルを書き出す

    Args:
        directory: 出力先ディレクトリ
        grid: 格子仕様
        times: 時刻 [days]
        arrays: {"u": ..., "v": ...} または {"ssh": ...}（形状 nt×ny×nx）

    Returns:
        マニフェストのパス
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = {}
    for name, values in arrays.items():
        filename = f"{name}.f64"
        np.ascontiguousarray(values, dtype="<f8").tofile(directory / filename)
        files[name] = filename

    manifest: Dict[str, Any] = {
        "grid": grid.to_dict(),
        "times": [float(t) for t in np.asarray(times, dtype=float)],
        "fields": files,
        "units": units or {"time": "days", "u": "m/s", "v": "m/s", "ssh": "m"},
    }
    if constants:
        manifest["constants"] = constants
    path = directory / "manifest.json"
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, ensure_ascii=False, indent=2)
    return path


def write_dataset(ds: VelocityDataset, directory: Path) -> Path:
    """速度データセットをマニフェスト形式で保存"""
    return write_manifest(directory, ds.grid, ds.times, {"u": ds.u, "v": ds.v})


def load_dataset(manifest_path: Path) -> VelocityDataset:
    """
    マニフェストからデータセットを読み込み検証する

    Raises:
        DataError: ファイル欠損、形状不一致、時刻の非単調、非有限値
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise DataError(f"manifest not found: {manifest_path}")
    try:
        with open(manifest_path, "r", encoding="utf-8") as f:
            manifest = json.load(f)
    except json.JSONDecodeError as e:
        raise DataError(f"manifest is not valid JSON: {e}") from e

    for key in ("grid", "times", "fields"):
        if key not in manifest:
            raise DataError(f"manifest is missing '{key}'")
    grid = GridSpec.from_dict(manifest["grid"])
    times = np.asarray(manifest["times"], dtype=float)
    shape = (times.size, grid.ny, grid.nx)
    fields = manifest["fields"]

    def _read(name: str) -> np.ndarray:
        path = manifest_path.parent / fields[name]
        if not path.exists():
            raise DataError(f"data file not found: {path}")
        data = np.fromfile(path, dtype="<f8")
        expected = int(np.prod(shape))
        if data.size != expected:
            raise DataError(
                f"{path.name}: expected {expected} values for shape {shape}, found {data.size}"
            )
        return data.reshape(shape)

    if "ssh" in fields:
        constants = manifest.get("constants", {})
        ssh = SshDataset(grid=grid, times=times, h=_read("ssh"))
        ds = geostrophic_from_ssh(
            ssh,
            g=float(constants.get("g", PHYSICAL_CONSTANTS["g"])),
            omega=float(constants.get("omega", PHYSICAL_CONSTANTS["omega"])),
            earth_radius=float(constants.get("earth_radius", grid.earth_radius)),
        )
    elif "u" in fields and "v" in fields:
        ds = VelocityDataset(grid=grid, times=times, u=_read("u"), v=_read("v"))
    else:
        raise DataError("manifest fields must name either u and v, or ssh")

    logger.info(
        f"event=dataset_loaded path={manifest_path} nt={ds.nt} ny={grid.ny} nx={grid.nx} "
        f"mode={grid.coordinate_mode} provenance={ds.provenance}"
    )
    return ds
