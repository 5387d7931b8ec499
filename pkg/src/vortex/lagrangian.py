#!/usr/bin/env python3
"""
粒子移流・面積交換オラクル・フィラメント化による寿命代理指標

機能:
- 固定刻み RK4 による流れ写像（領域外に出た粒子は直前位置で凍結しフラグ付け）
- 頂点挿入つきの曲線移流
- 移流曲線と再計算OECSの差集合面積による物質フラックス検証
- 周長増加率・凸包面積超過率による寿命判定（重心の近傍条件つき）
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import shapely
from shapely.geometry import Polygon

from src.vortex.detection_rules import (
    CLIP_SNAP_FRACTION,
    SECONDS_PER_DAY,
    VICINITY_RADIUS_DEG,
    LifetimeSettings,
    OrbitSettings,
    Severity,
    ValidationFlag,
)
from src.vortex.exceptions import ConfigError, DomainError
from src.vortex.field_core import FlowField, as_points
from src.vortex.oecs import ClosedCurve, find_cycle_near

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FlowMapRequest:
    """流れ写像の計算要求（時刻は days）"""

    seeds: np.ndarray
    t0: float
    t1: float
    step: float

    def __post_init__(self):
        if not self.step > 0:
            raise ConfigError(f"advection step must be positive, got {self.step}")
        seeds, _ = as_points(self.seeds)
        object.__setattr__(self, "seeds", np.array(seeds, dtype=float))

    @property
    def n_steps(self) -> int:
        return max(1, int(math.ceil(abs(self.t1 - self.t0) / self.step - 1e-9)))


@dataclass
class AdvectionResult:
    """移流結果。exited は途中で領域外に出て凍結された粒子。"""

    positions: np.ndarray
    exited: np.ndarray

    @property
    def any_exited(self) -> bool:
        return bool(self.exited.any())


def _check_span(ds: FlowField, t0: float, t1: float) -> None:
    lo, hi = ds.time_span
    tol = 1e-9 * max(1.0, abs(t1 - t0))
    if min(t0, t1) < lo - tol or max(t0, t1) > hi + tol:
        raise DomainError(f"advection interval [{t0}, {t1}] outside data span [{lo}, {hi}]")


def _rate(
    ds: FlowField, pts: np.ndarray, t: float, ok: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """座標/日 単位の速度。領域外の点は 0 とし ok から外す。"""
    inside = ok & ds.contains(pts, t=t)
    rate = np.zeros_like(pts)
    if inside.any():
        sub = pts[inside]
        rate[inside] = ds.velocity(sub, t) * SECONDS_PER_DAY / ds.metric(sub)
    return rate, inside


def advect(req: FlowMapRequest, ds: FlowField) -> AdvectionResult:
    """
    ẋ = v(x, t) を t0 から t1 まで固定刻み RK4 で積分

    Raises:
        DomainError: [t0, t1] がデータの時間範囲外、または出発点が領域外
    """
    _check_span(ds, req.t0, req.t1)
    pts = req.seeds.copy()
    if not np.all(ds.contains(pts, t=req.t0)):
        raise DomainError("advection seeds must lie inside the domain at t0")

    exited = np.zeros(pts.shape[0], dtype=bool)
    n = req.n_steps
    h = (req.t1 - req.t0) / n
    for k in range(n):
        active = ~exited
        if not active.any():
            break
        t = req.t0 + k * h
        x = pts[active]
        ok = np.ones(x.shape[0], dtype=bool)
        k1, ok = _rate(ds, x, t, ok)
        k2, ok = _rate(ds, x + 0.5 * h * k1, t + 0.5 * h, ok)
        k3, ok = _rate(ds, x + 0.5 * h * k2, t + 0.5 * h, ok)
        k4, ok = _rate(ds, x + h * k3, t + h, ok)
        new = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        ok &= ds.contains(new, t=t + h)

        moved = x.copy()
        moved[ok] = new[ok]
        pts[active] = moved
        idx = np.flatnonzero(active)
        exited[idx[~ok]] = True

    if exited.any():
        logger.debug(f"event=particles_exited count={int(exited.sum())} t0={req.t0} t1={req.t1}")
    return AdvectionResult(positions=pts, exited=exited)


def flow_map(ds: FlowField, seeds: Any, t0: float, t1: float, step: float) -> np.ndarray:
    """advect の簡易版（終点のみ返す）"""
    return advect(FlowMapRequest(np.asarray(seeds, dtype=float), t0, t1, step), ds).positions


def default_step(ds: FlowField, settings: LifetimeSettings = LifetimeSettings()) -> float:
    return settings.step_fraction * ds.native_time_step


def _advect_polyline(
    vertices: np.ndarray,
    ds: FlowField,
    t0: float,
    t1: float,
    step: float,
    spacing: float,
    settings: LifetimeSettings,
) -> AdvectionResult:
    """隣接頂点の移流後の距離が 2·spacing を超える辺に中点を挿入して再移流"""
    initial = np.array(vertices, dtype=float)
    result = advect(FlowMapRequest(initial, t0, t1, step), ds)
    final, exited = result.positions, result.exited

    for _ in range(settings.max_refine_rounds):
        seg = ds.segment_vectors(final, np.roll(final, -1, axis=0))
        long = np.hypot(seg[:, 0], seg[:, 1]) > 2.0 * spacing
        if not long.any():
            break
        if initial.shape[0] + int(long.sum()) > settings.max_vertices:
            logger.warning(
                f"event=refine_limit vertices={initial.shape[0]} limit={settings.max_vertices}"
            )
            break
        idx = np.flatnonzero(long)
        mids = 0.5 * (initial[idx] + np.roll(initial, -1, axis=0)[idx])
        added = advect(FlowMapRequest(mids, t0, t1, step), ds)
        initial = np.insert(initial, idx + 1, mids, axis=0)
        final = np.insert(final, idx + 1, added.positions, axis=0)
        exited = np.insert(exited, idx + 1, added.exited)

    return AdvectionResult(positions=final, exited=exited)


def advect_curve(
    curve: ClosedCurve,
    ds: FlowField,
    t0: float,
    t1: float,
    step: Optional[float] = None,
    spacing: Optional[float] = None,
    settings: LifetimeSettings = LifetimeSettings(),
) -> ClosedCurve:
    """
    閉曲線を t0 から t1 まで移流（自己交差してもそのまま返す）

    Args:
        step: 移流刻み [days]。None で step_fraction × データ時間間隔
        spacing: 頂点間隔の基準 h_s [m]。None で弧長刻み Δ
    """
    step = step or default_step(ds, settings)
    spacing = spacing or OrbitSettings().step_cells * ds.cell_size
    result = _advect_polyline(curve.vertices, ds, t0, t1, step, spacing, settings)
    return replace(
        ClosedCurve.from_vertices(ds, result.positions, curve.mu, curve.branch, t1),
        curve_id=curve.curve_id,
    )


# --- オラクル ---


@dataclass
class OracleResult:
    """面積交換オラクルの結果 [m²]"""

    in_area: float
    out_area: float
    eps_dt: float
    predicted_area: Optional[float] = None

    @property
    def exchanged_area(self) -> float:
        return self.in_area + self.out_area

    def to_dict(self) -> Dict[str, Any]:
        return {
            "in_area": self.in_area,
            "out_area": self.out_area,
            "eps_dt": self.eps_dt,
            "predicted_area": self.predicted_area,
        }


def _clean_polygon(plane: np.ndarray, grid_size: float):
    """頂点をスナップし、自己交差を解消した多角形"""
    poly = shapely.set_precision(Polygon(plane), grid_size)
    if not poly.is_valid:
        poly = poly.buffer(0)
    return poly


def flux_oracle(
    curve: ClosedCurve,
    ds: FlowField,
    t: float,
    eps_dt: float,
    step: Optional[float] = None,
    orbit_settings: OrbitSettings = OrbitSettings(),
    settings: LifetimeSettings = LifetimeSettings(),
) -> OracleResult:
    """
    curve を t + eps_dt まで移流し、同時刻で再計算したOECSとの差集合面積を求める

    in_area = 再計算 \\ 移流（流入）、out_area = 移流 \\ 再計算（流出）。

    Raises:
        OracleUnavailableError: 再計算OECSが見つからない
    """
    t1 = t + eps_dt
    advected = advect_curve(curve, ds, t, t1, step=step, settings=settings)
    recomputed = find_cycle_near(advected, ds, t1, curve.mu, curve.branch, orbit_settings)

    origin = curve.vertices.mean(axis=0)
    grid_size = CLIP_SNAP_FRACTION * max(ds.extent_m)
    moved = _clean_polygon(advected.plane(ds, origin), grid_size)
    found = _clean_polygon(recomputed.plane(ds, origin), grid_size)
    result = OracleResult(
        in_area=float(found.difference(moved).area),
        out_area=float(moved.difference(found).area),
        eps_dt=eps_dt,
    )
    logger.info(
        f"event=flux_oracle curve={curve.curve_id} eps_dt={eps_dt} "
        f"in_area={result.in_area:.4e} out_area={result.out_area:.4e}"
    )
    return result


# --- 寿命代理指標 ---


@dataclass
class LifetimeAssessment:
    """
    地平ごとのコヒーレンス判定

    lifetime はコヒーレントと判定された最大の地平（なければ 0）。
    判定の単調性は仮定しない。
    """

    horizons: List[float]
    coherent_flags: List[Optional[bool]]
    lifetime: float
    details: List[Dict[str, Any]] = field(default_factory=list)
    flags: List[ValidationFlag] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "lifetime_days": self.lifetime,
            "lifetime_proxy": True,
            "horizons": self.horizons,
            "coherent_flags": self.coherent_flags,
            "details": self.details,
            "flags": [f.to_dict() for f in self.flags],
        }


def vicinity_radius(ds: FlowField, settings: LifetimeSettings = LifetimeSettings()) -> Optional[float]:
    """重心移動の上限 [m]。geographic では既定で 3°の大円弧、cartesian では設定時のみ。"""
    if settings.vicinity_radius_m is not None:
        return settings.vicinity_radius_m
    if ds.coordinate_mode == "geographic":
        return math.radians(VICINITY_RADIUS_DEG) * ds.grid.earth_radius
    return None


def _closed_perimeter(plane: np.ndarray) -> float:
    seg = np.roll(plane, -1, axis=0) - plane
    return float(np.sum(np.hypot(seg[:, 0], seg[:, 1])))


def filamentation_measures(
    initial: ClosedCurve, advected_vertices: np.ndarray, ds: FlowField
) -> Dict[str, float]:
    """周長比・凸包面積超過率・重心移動距離"""
    origin = initial.vertices.mean(axis=0)
    plane = ds.to_plane(advected_vertices, origin)
    poly = _clean_polygon(plane, CLIP_SNAP_FRACTION * max(ds.extent_m))
    hull = poly.convex_hull
    deficiency = (hull.area - poly.area) / hull.area if hull.area > 0 else 1.0
    c0 = initial.polygon(ds, origin).centroid
    shift = math.hypot(poly.centroid.x - c0.x, poly.centroid.y - c0.y)
    return {
        "perimeter_ratio": _closed_perimeter(plane) / initial.sigma,
        "hull_deficiency": float(deficiency),
        "centroid_shift_m": float(shift),
    }


def lifetime_proxy(
    curve: ClosedCurve,
    ds: FlowField,
    horizons: Sequence[float],
    settings: LifetimeSettings = LifetimeSettings(),
    step: Optional[float] = None,
    jobs: int = 1,
) -> LifetimeAssessment:
    """
    フィラメント化による寿命の代理判定

    地平 τ でコヒーレント ⇔ 周長比 ≤ kappa_fil かつ凸包面積超過率 ≤ delta_max
    （かつ近傍半径が有効なら重心移動 ≤ 半径、領域外に出た粒子がない）。
    データ範囲を超える地平はスキップしてフラグを付ける。
    """
    t0 = curve.time
    step = step or default_step(ds, settings)
    spacing = OrbitSettings().step_cells * ds.cell_size
    radius = vicinity_radius(ds, settings)
    _, t_end = ds.time_span
    horizons = [float(h) for h in horizons]

    def _assess(tau: float) -> Dict[str, Any]:
        result = _advect_polyline(curve.vertices, ds, t0, t0 + tau, step, spacing, settings)
        measures = filamentation_measures(curve, result.positions, ds)
        coherent = (
            measures["perimeter_ratio"] <= settings.kappa_fil
            and measures["hull_deficiency"] <= settings.delta_max
            and not result.any_exited
        )
        if radius is not None and measures["centroid_shift_m"] > radius:
            coherent = False
        return {"horizon": tau, "coherent": bool(coherent), "exited": result.any_exited, **measures}

    flags: List[ValidationFlag] = []
    runnable = []
    for tau in horizons:
        if t0 + tau > t_end + 1e-9 * max(1.0, tau):
            logger.warning(f"event=horizon_skipped curve={curve.curve_id} horizon={tau} t_end={t_end}")
            flags.append(
                ValidationFlag.create(
                    "horizon_skipped",
                    Severity.WARNING,
                    f"地平 {tau} 日はデータ範囲を超えるためスキップしました",
                    {"horizon": tau, "t_end": t_end},
                )
            )
        else:
            runnable.append(tau)

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as executor:
        results = dict(zip(runnable, executor.map(_assess, runnable)))

    coherent_flags: List[Optional[bool]] = []
    details = []
    for tau in horizons:
        if tau in results:
            coherent_flags.append(results[tau]["coherent"])
            details.append(results[tau])
        else:
            coherent_flags.append(None)
            details.append({"horizon": tau, "skipped": True})
        if tau in results and results[tau]["exited"]:
            flags.append(
                ValidationFlag.create(
                    "particles_exited",
                    Severity.INFO,
                    f"地平 {tau} 日で一部の粒子が領域外に出ました",
                    {"horizon": tau},
                )
            )

    coherent = [tau for tau, ok in zip(horizons, coherent_flags) if ok]
    lifetime = max(coherent) if coherent else 0.0
    logger.info(f"event=lifetime curve={curve.curve_id} lifetime_days={lifetime}")
    return LifetimeAssessment(
        horizons=horizons,
        coherent_flags=coherent_flags,
        lifetime=lifetime,
        details=details,
        flags=flags,
    )
