#!/usr/bin/env python3
"""
楕円型OECS（方向場 χ_μ^± の極限閉軌道）の検出

機能:
- χ = sqrt((s2-μ)/(s2-s1)) e1 ± sqrt((μ-s1)/(s2-s1)) e2 の評価
- 向き補正付き固定刻み RK4 による弧長積分
- ポアンカレ断面上の戻り写像の符号変化を brentq で精密化
- 閉合・単純性・μ一定性による検証と反時計回りへの向き揃え
- μ掃引結果の入れ子ベルトへの集約
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq
from shapely.geometry import LineString, LinearRing, Polygon

from src.vortex.detection_rules import MU_SWEEP_CONFIG, OrbitSettings
from src.vortex.exceptions import DirectionFieldDomainError, DomainError, OracleUnavailableError
from src.vortex.field_core import (
    FlowField,
    as_points,
    lattice_strain,
    rotate90,
    strain_analysis,
)
from src.vortex.topology import PoincareSection

logger = logging.getLogger(__name__)

BRANCHES = ("plus", "minus")


class OrbitOutcome(Enum):
    """軌道積分の終了理由"""

    CLOSED = "closed"  # 出発点に接線を揃えて戻った
    RETURNED = "returned"  # 断面に同じ向きで再交差した
    LEFT_U_MU = "left_u_mu"
    OUT_OF_GRID = "out_of_grid"
    MAX_LENGTH = "max_length"


@dataclass(frozen=True)
class DirectionParams:
    """方向場のパラメータ（μ [1/s] と分岐）"""

    mu: float
    branch: str = "plus"

    def __post_init__(self):
        if self.branch not in BRANCHES:
            raise ValueError(f"branch must be one of {BRANCHES}, got {self.branch}")
        if not math.isfinite(self.mu):
            raise ValueError("mu must be finite")

    @property
    def sign(self) -> float:
        return 1.0 if self.branch == "plus" else -1.0


@dataclass
class OrbitResult:
    """1本の軌道積分の結果"""

    path: np.ndarray
    outcome: OrbitOutcome
    return_tau: Optional[float] = None
    crossing: Optional[np.ndarray] = None
    closure_gap: Optional[float] = None


def anchor_index(vertices: np.ndarray) -> int:
    """始点の選び方に依存しない基準頂点（x 最大、同値なら y 最大）"""
    order = np.lexsort((vertices[:, 1], vertices[:, 0]))
    return int(order[-1])


def polygon_signed_area(plane: np.ndarray) -> float:
    """靴紐公式による符号付き面積（反時計回りで正）"""
    x, y = plane[:, 0], plane[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


@dataclass(frozen=True, eq=False)
class ClosedCurve:
    """
    反時計回りの閉じた折れ線 γ

    vertices は元の座標（閉じる辺は暗黙）、arclength は各頂点までの弧長 [m]、
    sigma は閉じる辺を含む全周長 [m]、area は囲む面積 [m²]。
    """

    vertices: np.ndarray
    arclength: np.ndarray
    sigma: float
    area: float
    mu: float
    branch: str
    time: float
    closure_gap: float = 0.0
    curve_id: Optional[str] = None

    @classmethod
    def from_vertices(
        cls,
        ds: FlowField,
        vertices: Any,
        mu: float,
        branch: str,
        time: float,
        closure_gap: float = 0.0,
    ) -> "ClosedCurve":
        """頂点列から生成（時計回りなら先頭頂点を保ったまま反転）"""
        vertices, _ = as_points(vertices)
        vertices = np.array(vertices, dtype=float)
        origin = vertices.mean(axis=0)
        area = polygon_signed_area(ds.to_plane(vertices, origin))
        if area < 0:
            vertices = np.concatenate([vertices[:1], vertices[1:][::-1]])
            area = -area
        segments = ds.segment_vectors(vertices, np.roll(vertices, -1, axis=0))
        lengths = np.hypot(segments[:, 0], segments[:, 1])
        arclength = np.concatenate([[0.0], np.cumsum(lengths[:-1])])
        return cls(
            vertices=vertices,
            arclength=arclength,
            sigma=float(lengths.sum()),
            area=float(area),
            mu=float(mu),
            branch=branch,
            time=float(time),
            closure_gap=float(closure_gap),
        )

    @property
    def n_vertices(self) -> int:
        return int(self.vertices.shape[0])

    def plane(self, ds: FlowField, origin: Optional[Any] = None) -> np.ndarray:
        if origin is None:
            origin = self.vertices.mean(axis=0)
        return ds.to_plane(self.vertices, origin)

    def polygon(self, ds: FlowField, origin: Optional[Any] = None) -> Polygon:
        return Polygon(self.plane(ds, origin))

    def centroid(self, ds: FlowField) -> np.ndarray:
        """面積重心（元の座標）"""
        origin = self.vertices.mean(axis=0)
        c = self.polygon(ds, origin).centroid
        return ds.from_plane(np.array([c.x, c.y]), origin)[0]

    def rebased(self, ds: FlowField, start: int) -> "ClosedCurve":
        """始点を頂点 start に移した同一曲線"""
        return replace(
            ClosedCurve.from_vertices(
                ds, np.roll(self.vertices, -start, axis=0), self.mu, self.branch, self.time,
                self.closure_gap,
            ),
            curve_id=self.curve_id,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": self.curve_id,
            "time": self.time,
            "mu": self.mu,
            "branch": self.branch,
            "sigma": self.sigma,
            "area": self.area,
            "closure_gap": self.closure_gap,
            "vertices": self.vertices.tolist(),
        }

    def to_record(self) -> Dict[str, Any]:
        """GeoJSON 形式のポリゴンレコード"""
        ring = np.vstack([self.vertices, self.vertices[:1]])
        return {
            "type": "Feature",
            "geometry": {"type": "Polygon", "coordinates": [ring.tolist()]},
            "properties": {
                "id": self.curve_id,
                "time": self.time,
                "mu": self.mu,
                "branch": self.branch,
                "sigma": self.sigma,
                "area": self.area,
            },
        }

    @classmethod
    def from_record(cls, ds: FlowField, record: Dict[str, Any]) -> "ClosedCurve":
        props = record["properties"]
        ring = np.asarray(record["geometry"]["coordinates"][0], dtype=float)[:-1]
        curve = cls.from_vertices(ds, ring, props["mu"], props["branch"], props["time"])
        return replace(curve, curve_id=props.get("id"))


@dataclass
class OecsBelt:
    """入れ子になった閉曲線の帯（外側から内側の順）"""

    belt_id: int
    members: List[ClosedCurve] = field(default_factory=list)
    representative: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "belt_id": self.belt_id,
            "members": [m.curve_id for m in self.members],
            "representative": self.representative,
        }


def _chi_batch(
    ds: FlowField, points: np.ndarray, t: float, p: DirectionParams, settings: OrbitSettings
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """χ（向き未補正）と、格子内・U_μ 内のマスク"""
    n = points.shape[0]
    chi_vec = np.zeros((n, 2))
    in_grid = ds.contains(points, margin_m=0.05 * ds.cell_size, t=t)
    in_u = np.zeros(n, dtype=bool)
    if in_grid.any():
        parts = strain_analysis(ds, points[in_grid], t)
        s1, s2 = parts.s1, parts.s2
        gap = s2 - s1
        scale = np.maximum(np.maximum(np.abs(s1), np.abs(s2)), np.finfo(float).tiny)
        ok = (gap > settings.eigen_gap * scale) & (s1 <= p.mu) & (p.mu <= s2)
        safe = np.where(ok, gap, 1.0)
        alpha = np.sqrt(np.clip((s2 - p.mu) / safe, 0.0, 1.0))
        beta = np.sqrt(np.clip((p.mu - s1) / safe, 0.0, 1.0))
        chi_vec[in_grid] = alpha[:, None] * parts.e1 + p.sign * beta[:, None] * parts.e2
        in_u[in_grid] = ok
    return chi_vec, in_grid, in_u


def chi(
    ds: FlowField, x: Any, t: float, p: DirectionParams, settings: OrbitSettings = OrbitSettings()
) -> np.ndarray:
    """
    方向場 χ_μ^± の単位ベクトル

    Raises:
        DomainError: 格子外
        DirectionFieldDomainError: U_μ の外（s1 ≤ μ ≤ s2 でない、または s1 = s2）
    """
    pts, single = as_points(x)
    parts = strain_analysis(ds, pts, t)
    s1, s2 = parts.s1, parts.s2
    gap = s2 - s1
    scale = np.maximum(np.maximum(np.abs(s1), np.abs(s2)), np.finfo(float).tiny)
    ok = (gap > settings.eigen_gap * scale) & (s1 <= p.mu) & (p.mu <= s2)
    if not np.all(ok):
        k = int(np.argmin(ok))
        raise DirectionFieldDomainError(
            f"mu={p.mu:.3e} outside [s1, s2] = [{s1[k]:.3e}, {s2[k]:.3e}] at "
            f"({pts[k, 0]:.6g}, {pts[k, 1]:.6g})"
        )
    alpha = np.sqrt(np.clip((s2 - p.mu) / gap, 0.0, 1.0))
    beta = np.sqrt(np.clip((p.mu - s1) / gap, 0.0, 1.0))
    out = alpha[:, None] * parts.e1 + p.sign * beta[:, None] * parts.e2
    return out[0] if single else out


def tangential_stretch(curve: ClosedCurve, ds: FlowField, t: float) -> np.ndarray:
    """頂点ごとの ⟨x′, S x′⟩ / ⟨x′, x′⟩（接線は周期的中心差分）"""
    v = curve.vertices
    tangents = ds.segment_vectors(np.roll(v, 1, axis=0), np.roll(v, -1, axis=0))
    S = strain_analysis(ds, v, t).S
    num = np.einsum("ni,nij,nj->n", tangents, S, tangents)
    return num / np.einsum("ni,ni->n", tangents, tangents)


def _integrate_batch(
    ds: FlowField,
    seeds: np.ndarray,
    t: float,
    p: DirectionParams,
    settings: OrbitSettings,
    initial_direction: np.ndarray,
    section: Optional[PoincareSection] = None,
    correction: bool = True,
) -> List[OrbitResult]:
    """複数シードの同時 RK4 積分"""
    cell = ds.cell_size
    h = settings.step_cells * cell
    eps_close = settings.eps_close_cells * cell
    max_steps = int(math.ceil(settings.max_length_factor * ds.domain_perimeter / h))
    n = seeds.shape[0]

    pos = np.array(seeds, dtype=float)
    ref = np.array(initial_direction, dtype=float)
    start_tangent = np.zeros((n, 2))
    active = np.ones(n, dtype=bool)
    outcome: List[Optional[OrbitOutcome]] = [None] * n
    end_step = np.zeros(n, dtype=int)
    crossings: List[Optional[np.ndarray]] = [None] * n
    return_tau = np.full(n, np.nan)
    gaps = np.full(n, np.nan)
    eta_prev = np.zeros(n)
    history = [pos.copy()]

    def _stage(points: np.ndarray, reference: np.ndarray):
        vec, in_grid, in_u = _chi_batch(ds, points, t, p, settings)
        if correction:
            flip = np.einsum("ni,ni->n", vec, reference) < 0.0
            vec[flip] *= -1.0
        return vec, in_grid, in_u

    for step in range(1, max_steps + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        x = pos[idx]
        r = ref[idx]
        ok_grid = np.ones(idx.size, dtype=bool)
        ok_u = np.ones(idx.size, dtype=bool)

        k1, g, u = _stage(x, r)
        ok_grid &= g
        ok_u &= u
        f1 = k1 / ds.metric(x)
        x2 = x + 0.5 * h * f1
        k2, g, u = _stage(x2, r)
        ok_grid &= g
        ok_u &= u
        f2 = k2 / ds.metric(x2)
        x3 = x + 0.5 * h * f2
        k3, g, u = _stage(x3, r)
        ok_grid &= g
        ok_u &= u
        f3 = k3 / ds.metric(x3)
        x4 = x + h * f3
        k4, g, u = _stage(x4, r)
        ok_grid &= g
        ok_u &= u
        f4 = k4 / ds.metric(x4)
        x_new = x + h * (f1 + 2.0 * f2 + 2.0 * f3 + f4) / 6.0

        for local in np.flatnonzero(~(ok_grid & ok_u)):
            i = idx[local]
            outcome[i] = OrbitOutcome.OUT_OF_GRID if not ok_grid[local] else OrbitOutcome.LEFT_U_MU
            active[i] = False
            end_step[i] = step - 1

        good = ok_grid & ok_u
        moved = idx[good]
        mean_tangent = (k1 + 2.0 * k2 + 2.0 * k3 + k4)[good]
        mean_tangent /= np.linalg.norm(mean_tangent, axis=1, keepdims=True)
        if step == 1:
            start_tangent[moved] = mean_tangent
        ref[moved] = mean_tangent
        previous = pos[moved].copy()
        pos[moved] = x_new[good]
        history.append(pos.copy())

        if step < settings.min_return_steps:
            if section is not None:
                eta_prev[moved] = section.coordinates(ds, pos[moved])[1]
            continue

        if section is not None:
            tau_new, eta_new = section.coordinates(ds, pos[moved])
            tau_old, _ = section.coordinates(ds, previous)
            crossed = (eta_prev[moved] < 0.0) & (eta_new >= 0.0)
            for local in np.flatnonzero(crossed):
                i = moved[local]
                lam = eta_prev[i] / (eta_prev[i] - eta_new[local])
                tau_cross = tau_old[local] + lam * (tau_new[local] - tau_old[local])
                if abs(tau_cross) > section.half_length:
                    continue
                crossings[i] = previous[local] + lam * (pos[i] - previous[local])
                return_tau[i] = tau_cross
                outcome[i] = OrbitOutcome.RETURNED
                active[i] = False
                end_step[i] = step - 1
            eta_prev[moved] = eta_new
        else:
            for local, i in enumerate(moved):
                p0 = ds.to_plane(previous[local], seeds[i])[0]
                p1 = ds.to_plane(pos[i], seeds[i])[0]
                d = p1 - p0
                lam = float(np.clip(-np.dot(p0, d) / max(np.dot(d, d), 1e-300), 0.0, 1.0))
                gap = float(np.hypot(*(p0 + lam * d)))
                if gap <= eps_close and np.dot(mean_tangent[local], start_tangent[i]) > 0.0:
                    outcome[i] = OrbitOutcome.CLOSED
                    gaps[i] = gap
                    active[i] = False
                    end_step[i] = step - 1

    last = len(history) - 1
    for i in np.flatnonzero(active):
        outcome[i] = OrbitOutcome.MAX_LENGTH
        end_step[i] = last

    stacked = np.stack(history)
    results = []
    for i in range(n):
        results.append(
            OrbitResult(
                path=stacked[: end_step[i] + 1, i].copy(),
                outcome=outcome[i],
                return_tau=None if np.isnan(return_tau[i]) else float(return_tau[i]),
                crossing=crossings[i],
                closure_gap=None if np.isnan(gaps[i]) else float(gaps[i]),
            )
        )
    return results


def integrate_orbit(
    ds: FlowField,
    seed: Any,
    t: float,
    p: DirectionParams,
    settings: OrbitSettings = OrbitSettings(),
    initial_direction: Optional[Any] = None,
    section: Optional[PoincareSection] = None,
    correction: bool = True,
) -> OrbitResult:
    """
    x′ = sign⟨χ(x(s)), x′(s-Δ)⟩ χ(x(s)) を弧長で積分

    Args:
        ds: 速度場
        seed: 出発点
        t: 時刻 [days]
        p: 方向場パラメータ
        settings: 積分設定
        initial_direction: 最初の向きの基準（None なら seed での χ）
        section: 指定時は断面への再交差で終了（RETURNED）
        correction: False で向き補正を外す（回帰試験用）

    Raises:
        DirectionFieldDomainError: seed が U_μ の外
    """
    seed_pt, _ = as_points(seed)
    chi0 = chi(ds, seed_pt, t, p, settings)
    direction = chi0 if initial_direction is None else np.asarray(initial_direction, dtype=float).reshape(1, 2)
    return _integrate_batch(ds, seed_pt, t, p, settings, direction, section, correction)[0]


class _NoReturn(Exception):
    pass


def _return_displacement(
    ds: FlowField, section: PoincareSection, tau: float, t: float, p: DirectionParams,
    settings: OrbitSettings,
) -> Tuple[float, OrbitResult]:
    seed = section.point_at(ds, tau)
    result = _integrate_batch(
        ds, seed, t, p, settings, section.normal[None, :], section=section
    )[0]
    if result.outcome is not OrbitOutcome.RETURNED:
        raise _NoReturn(result.outcome.value)
    return result.return_tau - tau, result


def validate_cycle(
    ds: FlowField,
    vertices: np.ndarray,
    t: float,
    p: DirectionParams,
    settings: OrbitSettings = OrbitSettings(),
    closure_gap: float = 0.0,
) -> Optional[ClosedCurve]:
    """閉合・単純性・μ一定性を検証して反時計回りの ClosedCurve を返す（不合格は None）"""
    if vertices.shape[0] < 8:
        return None
    if closure_gap > settings.eps_close_cells * ds.cell_size:
        logger.debug(f"event=cycle_rejected reason=closure gap={closure_gap:.3e}")
        return None
    plane = ds.to_plane(vertices, vertices.mean(axis=0))
    if not LinearRing(plane).is_simple:
        logger.debug("event=cycle_rejected reason=self_intersecting")
        return None
    curve = ClosedCurve.from_vertices(ds, vertices, p.mu, p.branch, t, closure_gap)
    stretch = tangential_stretch(curve, ds, t)
    parts = strain_analysis(ds, curve.vertices, t)
    scale = float(np.max(np.maximum(np.abs(parts.s1), np.abs(parts.s2))))
    deviation = float(np.max(np.abs(stretch - p.mu)))
    if deviation > settings.tol_mu * scale:
        logger.debug(
            f"event=cycle_rejected reason=mu_constancy deviation={deviation:.3e} "
            f"limit={settings.tol_mu * scale:.3e}"
        )
        return None
    return curve


def _bracket_hits_known(
    ds: FlowField, section: PoincareSection, a: float, b: float, known: Sequence[ClosedCurve]
) -> bool:
    if not known:
        return False
    segment = LineString(ds.to_plane(section.point_at(ds, [a, b]), section.base))
    for curve in known:
        ring = LinearRing(curve.plane(ds, section.base))
        if segment.intersects(ring):
            return True
    return False


def find_limit_cycles(
    ds: FlowField,
    section: PoincareSection,
    t: float,
    p: DirectionParams,
    settings: OrbitSettings = OrbitSettings(),
) -> List[ClosedCurve]:
    """
    断面上の戻り写像の不動点として極限閉軌道を求める

    シードは断面全体に n_seed 点。符号付き変位 d(τ) = τ_ret - τ の符号変化を brentq で
    精密化し、再積分した軌道を検証する。戻らないシードは読み飛ばす。
    """
    cell = ds.cell_size
    taus = np.linspace(-section.half_length, section.half_length, settings.n_seed)
    seeds = section.point_at(ds, taus)
    initial = np.repeat(section.normal[None, :], taus.size, axis=0)
    results = _integrate_batch(ds, seeds, t, p, settings, initial, section=section)

    displacement = np.array(
        [r.return_tau - tau if r.outcome is OrbitOutcome.RETURNED else np.nan for r, tau in zip(results, taus)]
    )
    skipped = int(np.count_nonzero(np.isnan(displacement)))
    if skipped:
        logger.debug(
            f"event=seeds_skipped mu={p.mu:.3e} branch={p.branch} skipped={skipped} total={taus.size}"
        )

    def _objective(tau: float) -> float:
        return _return_displacement(ds, section, tau, t, p, settings)[0]

    curves: List[ClosedCurve] = []
    for i in range(taus.size - 1):
        d0, d1 = displacement[i], displacement[i + 1]
        if np.isnan(d0) or np.isnan(d1):
            continue
        if d0 == 0.0:
            root = taus[i]
        elif d0 * d1 < 0.0:
            if _bracket_hits_known(ds, section, taus[i], taus[i + 1], curves):
                continue
            try:
                root = brentq(_objective, taus[i], taus[i + 1], xtol=settings.root_xtol_cells * cell)
            except (_NoReturn, ValueError, RuntimeError) as e:
                logger.warning(
                    f"event=root_bracket_failed mu={p.mu:.3e} branch={p.branch} "
                    f"tau=[{taus[i]:.1f}, {taus[i + 1]:.1f}] reason=\"{e}\""
                )
                continue
        else:
            continue

        try:
            _, orbit = _return_displacement(ds, section, root, t, p, settings)
        except _NoReturn:
            continue
        seed = section.point_at(ds, root)[0]
        gap = float(np.hypot(*ds.to_plane(orbit.crossing, seed)[0]))
        curve = validate_cycle(ds, orbit.path, t, p, settings, closure_gap=gap)
        if curve is not None:
            curves.append(curve)
    logger.debug(f"event=limit_cycles mu={p.mu:.3e} branch={p.branch} found={len(curves)}")
    return curves


def _curve_sort_key(ds: FlowField, curve: ClosedCurve) -> Tuple:
    c = curve.centroid(ds)
    return (-round(curve.area, 6), round(float(c[0]), 9), round(float(c[1]), 9), curve.mu, curve.branch)


def assemble_belts(
    ds: FlowField, curves: Iterable[ClosedCurve], settings: OrbitSettings = OrbitSettings()
) -> List[OecsBelt]:
    """
    曲線を入れ子の帯にまとめる

    面積の大きい順に、重心を含む最も内側のメンバーをもつ帯へ入れる。
    そのメンバーと交差する曲線は捨てるので、帯の中の曲線は互いに交わらない。
    同じ μ で対称差面積が小さい曲線は重複として捨てる。
    曲線IDは "b<帯番号>-m<外側からの順番>"。
    """
    ordered = sorted(curves, key=lambda c: _curve_sort_key(ds, c))
    if not ordered:
        return []
    origin = ordered[0].vertices[0]
    kept: List[Tuple[ClosedCurve, Polygon]] = []
    for curve in ordered:
        poly = curve.polygon(ds, origin)
        duplicate = any(
            other.mu == curve.mu
            and poly.symmetric_difference(other_poly).area
            <= settings.duplicate_area_fraction * curve.area
            for other, other_poly in kept
        )
        if not duplicate:
            kept.append((curve, poly))

    belts: List[OecsBelt] = []
    inner_polygons: List[Polygon] = []
    for curve, poly in kept:
        centroid = poly.centroid
        hosts = [k for k, inner in enumerate(inner_polygons) if inner.contains(centroid)]
        if hosts:
            k = min(hosts, key=lambda j: inner_polygons[j].area)
            if inner_polygons[k].exterior.crosses(poly.exterior):
                logger.debug(
                    f"event=crossing_curve_dropped belt={belts[k].belt_id} mu={curve.mu:.3e} "
                    f"branch={curve.branch}"
                )
                continue
            belts[k].members.append(curve)
            inner_polygons[k] = poly
        else:
            belts.append(OecsBelt(belt_id=len(belts), members=[curve]))
            inner_polygons.append(poly)
    for belt in belts:
        belt.members = [
            replace(c, curve_id=f"b{belt.belt_id:03d}-m{k:02d}") for k, c in enumerate(belt.members)
        ]
    return belts


def default_mu_values(
    ds: FlowField,
    t: float,
    count: int = MU_SWEEP_CONFIG["count"],
    bound_fraction: float = MU_SWEEP_CONFIG["bound_fraction"],
) -> np.ndarray:
    """[-μ*, μ*] の等間隔値（μ* = bound_fraction × median max(|s1|, |s2|)）"""
    _, _, parts = lattice_strain(ds, t)
    mu_star = bound_fraction * float(np.median(np.maximum(np.abs(parts.s1), np.abs(parts.s2))))
    if count == 1:
        return np.array([0.0])
    return np.linspace(-mu_star, mu_star, count)


def sweep_mu(
    ds: FlowField,
    t: float,
    sections: Sequence[PoincareSection],
    mu_values: Sequence[float],
    branches: Sequence[str] = BRANCHES,
    settings: OrbitSettings = OrbitSettings(),
    jobs: int = 1,
    mu_abs_max: Optional[float] = None,
) -> List[OecsBelt]:
    """
    (断面, μ, 分岐) ごとに極限閉軌道を探索し、帯に集約

    Raises:
        ValueError: μ が非有限、または |μ| > mu_abs_max
    """
    mu_values = [float(m) for m in mu_values]
    for mu in mu_values:
        if not math.isfinite(mu) or (mu_abs_max is not None and abs(mu) > mu_abs_max):
            raise ValueError(f"invalid mu value: {mu}")
    tasks = [(s, DirectionParams(mu, b)) for s in sections for mu in mu_values for b in branches]

    def _run(task: Tuple[PoincareSection, DirectionParams]) -> List[ClosedCurve]:
        section, params = task
        try:
            return find_limit_cycles(ds, section, t, params, settings)
        except DomainError as e:
            logger.warning(f"event=section_failed mu={params.mu:.3e} reason=\"{e}\"")
            return []

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as executor:
        collected = list(executor.map(_run, tasks))
    curves = [c for group in collected for c in group]
    belts = assemble_belts(ds, curves, settings)
    logger.info(
        f"event=mu_sweep_done t={t} tasks={len(tasks)} curves={len(curves)} belts={len(belts)}"
    )
    return belts


def find_cycle_near(
    curve: ClosedCurve,
    ds: FlowField,
    t: float,
    mu: float,
    branch: str,
    settings: OrbitSettings = OrbitSettings(),
) -> ClosedCurve:
    """
    curve の近くで時刻 t の楕円型OECSを再計算

    curve の基準頂点（anchor_index）に法線方向の断面を置いて探索し、対称差面積が最小のものを返す。

    Raises:
        OracleUnavailableError: 見つからない場合
    """
    v = np.roll(curve.vertices, -anchor_index(curve.vertices), axis=0)
    tangent = ds.segment_vectors(v[-1], v[1])[0]
    normal = rotate90(tangent / np.linalg.norm(tangent))
    half = max(settings.near_search_cells * ds.cell_size, 0.25 * math.sqrt(curve.area / math.pi))
    section = PoincareSection(
        base=(float(v[0, 0]), float(v[0, 1])),
        direction=(float(normal[0]), float(normal[1])),
        half_length=half,
    )
    try:
        found = find_limit_cycles(ds, section, t, DirectionParams(mu, branch), settings)
    except DomainError as e:
        raise OracleUnavailableError(f"search near curve left the domain: {e}") from e
    if not found:
        raise OracleUnavailableError(
            f"no elliptic OECS with mu={mu:.3e} ({branch}) near the curve at t={t}"
        )
    origin = v[0]
    target = curve.polygon(ds, origin)
    return min(found, key=lambda c: c.polygon(ds, origin).symmetric_difference(target).area)
