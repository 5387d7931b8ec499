#!/usr/bin/env python3
"""
ひずみ速度テンソル場の特異点検出・分類とポアンカレ断面の配置

S11 - S22 と S12 の共通零点を候補セルから Newton 法で精密化し、
e1 方向場の指数で wedge (+1/2) / trisector (-1/2) に分類する。
互いに最近傍の wedge ペアの中点に断面を置く。
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.neighbors import NearestNeighbors

from src.vortex.detection_rules import TopologySettings
from src.vortex.exceptions import ClassificationError, DomainError
from src.vortex.field_core import FlowField, lattice_strain, rotate90, strain_analysis

logger = logging.getLogger(__name__)

WEDGE = "wedge"
TRISECTOR = "trisector"


@dataclass(frozen=True)
class Singularity:
    """ひずみ速度テンソル場の特異点"""

    position: Tuple[float, float]
    kind: Optional[str] = None
    index: Optional[float] = None
    residual: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "position": list(self.position),
            "kind": self.kind,
            "index": self.index,
            "residual": self.residual,
        }


@dataclass(frozen=True)
class PoincareSection:
    """wedge ペアの中点に置く線分（方向は物理平面上の単位ベクトル）"""

    base: Tuple[float, float]
    direction: Tuple[float, float]
    half_length: float
    parent_pair: Tuple[Singularity, ...] = field(default=())

    @property
    def normal(self) -> np.ndarray:
        return rotate90(np.asarray(self.direction))

    def point_at(self, ds: FlowField, tau: Any) -> np.ndarray:
        """断面上の符号付き距離 tau [m] の位置"""
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        offsets = tau[:, None] * np.asarray(self.direction)[None, :]
        return ds.displace(np.repeat(np.asarray(self.base)[None, :], tau.size, axis=0), offsets)

    def coordinates(self, ds: FlowField, points: Any) -> Tuple[np.ndarray, np.ndarray]:
        """点の (断面方向成分 τ, 法線方向成分 η) [m]"""
        plane = ds.to_plane(points, self.base)
        return plane @ np.asarray(self.direction), plane @ self.normal

    def to_dict(self) -> Dict[str, Any]:
        return {
            "base": list(self.base),
            "direction": list(self.direction),
            "half_length": self.half_length,
            "parent_pair": [s.to_dict() for s in self.parent_pair],
        }


def _strain_residual(ds: FlowField, points: np.ndarray, t: float) -> np.ndarray:
    S = strain_analysis(ds, points, t).S
    return np.stack([S[..., 0, 0] - S[..., 1, 1], S[..., 0, 1]], axis=-1)


def _newton_refine(
    ds: FlowField, start: np.ndarray, t: float, scale: float, settings: TopologySettings
) -> Optional[Tuple[np.ndarray, float]]:
    """候補点を (S11 - S22, S12) = 0 へ Newton 法で精密化"""
    cell = ds.cell_size
    h = 1e-2 * cell
    probes = np.array([[0.0, 0.0], [h, 0.0], [-h, 0.0], [0.0, h], [0.0, -h]])
    point = start.copy()
    for _ in range(settings.newton_max_iter):
        try:
            stencil = ds.displace(np.repeat(point[None, :], 5, axis=0), probes)
            values = _strain_residual(ds, stencil, t)
        except DomainError:
            return None
        residual = values[0]
        if np.max(np.abs(residual)) <= settings.newton_residual * scale:
            return point, float(np.max(np.abs(residual)) / scale)
        jac = np.column_stack([(values[1] - values[2]) / (2 * h), (values[3] - values[4]) / (2 * h)])
        try:
            step = np.linalg.solve(jac, -residual)
        except np.linalg.LinAlgError:
            return None
        point = ds.displace(point, step)[0]
        if np.hypot(*ds.to_plane(point, start)[0]) > 2.0 * cell:
            return None
    return None


def _merge_candidates(
    ds: FlowField, candidates: List[Tuple[np.ndarray, float]], radius_m: float
) -> List[Tuple[np.ndarray, float]]:
    """radius_m 未満で隣接する候補を残差最小の1点に統合"""
    if len(candidates) <= 1:
        return candidates
    positions = np.array([c[0] for c in candidates])
    plane = ds.to_plane(positions, positions[0])
    nn = NearestNeighbors(radius=radius_m).fit(plane)
    neighbours = nn.radius_neighbors(plane, return_distance=False)

    assigned = np.zeros(len(candidates), dtype=bool)
    merged = []
    for i in np.lexsort((positions[:, 1], positions[:, 0])):
        if assigned[i]:
            continue
        cluster = [j for j in neighbours[i] if not assigned[j]]
        assigned[cluster] = True
        best = min(cluster, key=lambda j: (candidates[j][1], j))
        merged.append(candidates[best])
    return merged


def find_singularities(
    ds: FlowField, t: float, settings: TopologySettings = TopologySettings()
) -> List[Singularity]:
    """
    ひずみ速度テンソル場の横断的な共通零点を列挙

    Args:
        ds: 速度場
        t: 時刻 [days]
        settings: 特異点検出の設定

    Returns:
        位置で辞書順に並んだ Singularity（未分類）のリスト
    """
    xs, ys, parts = lattice_strain(ds, t)
    a = parts.S[..., 0, 0] - parts.S[..., 1, 1]
    b = parts.S[..., 0, 1]
    scale = float(max(np.max(np.abs(a)), np.max(np.abs(b))))
    gradient_scale = float(np.max(np.abs(parts.S)) + np.max(np.abs(parts.W)))
    if gradient_scale == 0.0 or scale <= settings.degenerate_scale * gradient_scale:
        logger.warning(
            f"event=non_transversal_strain t={t} strain_scale={scale:.3e} "
            f"gradient_scale={gradient_scale:.3e}"
        )
        return []

    def _changes_sign(values: np.ndarray) -> np.ndarray:
        corners = np.stack([values[:-1, :-1], values[1:, :-1], values[:-1, 1:], values[1:, 1:]])
        return (corners.min(axis=0) <= 0.0) & (corners.max(axis=0) >= 0.0)

    cells = np.argwhere(_changes_sign(a) & _changes_sign(b))
    logger.debug(f"event=singularity_candidates t={t} count={len(cells)}")

    candidates = []
    for j, i in cells:
        start = np.array([0.5 * (xs[i] + xs[i + 1]), 0.5 * (ys[j] + ys[j + 1])])
        refined = _newton_refine(ds, start, t, scale, settings)
        if refined is None:
            logger.warning(
                f"event=newton_not_converged t={t} x={start[0]:.6g} y={start[1]:.6g}"
            )
            continue
        candidates.append(refined)

    merged = _merge_candidates(ds, candidates, settings.merge_cells * ds.cell_size)
    result = [
        Singularity(position=(float(p[0]), float(p[1])), residual=r) for p, r in merged
    ]
    result.sort(key=lambda s: s.position)
    logger.info(f"event=singularities_found t={t} count={len(result)}")
    return result


def poincare_index(
    ds: FlowField, t: float, position: Any, settings: TopologySettings = TopologySettings()
) -> float:
    """position を囲む円上で e1 方向場の回転角を π 反転込みで追跡した指数"""
    radius = settings.r_class_cells * ds.cell_size
    angles = 2.0 * np.pi * np.arange(settings.class_samples) / settings.class_samples
    offsets = radius * np.column_stack([np.cos(angles), np.sin(angles)])
    centre = np.repeat(np.asarray(position, dtype=float)[None, :], angles.size, axis=0)
    e1 = strain_analysis(ds, ds.displace(centre, offsets), t).e1

    total = 0.0
    previous = e1[0]
    for k in range(1, angles.size + 1):
        current = e1[k % angles.size]
        if np.dot(current, previous) < 0.0:
            current = -current
        total += math.atan2(
            previous[0] * current[1] - previous[1] * current[0], np.dot(previous, current)
        )
        previous = current
    return total / (2.0 * np.pi)


def _kind_from_index(index: float, position: Any, settings: TopologySettings) -> str:
    if abs(index - 0.5) <= settings.index_tolerance:
        return WEDGE
    if abs(index + 0.5) <= settings.index_tolerance:
        return TRISECTOR
    raise ClassificationError(
        f"singularity at ({position[0]:.6g}, {position[1]:.6g}) has index {index:.3f}"
    )


def classify_singularity(
    ds: FlowField, t: float, s: Any, settings: TopologySettings = TopologySettings()
) -> str:
    """
    特異点の種類を判定

    Raises:
        ClassificationError: 指数が ±1/2 から index_tolerance 以上ずれる場合
    """
    position = s.position if isinstance(s, Singularity) else s
    return _kind_from_index(poincare_index(ds, t, position, settings), position, settings)


def classify_all(
    ds: FlowField,
    t: float,
    singularities: Sequence[Singularity],
    settings: TopologySettings = TopologySettings(),
    jobs: int = 1,
) -> List[Singularity]:
    """全特異点を並列に分類（分類不能な点は警告して除外）"""

    def _classify(s: Singularity) -> Optional[Singularity]:
        try:
            index = poincare_index(ds, t, s.position, settings)
            kind = _kind_from_index(index, s.position, settings)
        except (ClassificationError, DomainError) as e:
            logger.warning(f"event=classification_failed t={t} reason=\"{e}\"")
            return None
        return Singularity(
            position=s.position, kind=kind, index=0.5 if kind == WEDGE else -0.5, residual=s.residual
        )

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as executor:
        results = list(executor.map(_classify, singularities))
    return [s for s in results if s is not None]


def _clip_half_length(
    ds: FlowField, base: np.ndarray, direction: np.ndarray, half_length: float, t: float
) -> float:
    """断面の両端が領域内（2セル内側）に収まる最大の半長"""
    taus = np.linspace(0.0, half_length, 65)
    margin = 2.0 * ds.cell_size
    clipped = half_length
    for sign in (1.0, -1.0):
        points = ds.displace(np.repeat(base[None, :], taus.size, axis=0), sign * taus[:, None] * direction)
        inside = ds.contains(points, margin_m=margin, t=t)
        if not inside.all():
            first_out = int(np.argmin(inside))
            clipped = min(clipped, taus[max(first_out - 1, 0)])
    return float(clipped)


def place_sections(
    ds: FlowField,
    singularities: Sequence[Singularity],
    settings: TopologySettings = TopologySettings(),
    t: float = 0.0,
) -> List[PoincareSection]:
    """
    互いに最近傍の wedge ペアごとにポアンカレ断面を配置

    断面の基点はペアの中点、方向はペアを結ぶ線分の垂直二等分線方向、
    半長は section_length_factor × ペア間距離（領域でクリップ）。
    """
    if len(singularities) < 2:
        return []
    positions = np.array([s.position for s in singularities])
    plane = ds.to_plane(positions, positions[0])
    nn = NearestNeighbors(n_neighbors=2).fit(plane)
    distances, indices = nn.kneighbors(plane)
    nearest = indices[:, 1]
    max_distance = settings.pair_max_cells * ds.cell_size

    sections = []
    for i, j in enumerate(nearest):
        if j <= i or nearest[j] != i:
            continue
        if singularities[i].kind != WEDGE or singularities[j].kind != WEDGE:
            continue
        separation = float(distances[i, 1])
        if separation >= max_distance:
            continue
        base = 0.5 * (positions[i] + positions[j])
        pair_vector = plane[j] - plane[i]
        direction = rotate90(pair_vector / np.linalg.norm(pair_vector))
        if direction[0] < 0 or (direction[0] == 0 and direction[1] < 0):
            direction = -direction
        half_length = _clip_half_length(
            ds, base, direction, settings.section_length_factor * separation, t
        )
        if half_length <= 0.0:
            logger.warning(f"event=section_clipped_away base=({base[0]:.6g}, {base[1]:.6g})")
            continue
        sections.append(
            PoincareSection(
                base=(float(base[0]), float(base[1])),
                direction=(float(direction[0]), float(direction[1])),
                half_length=half_length,
                parent_pair=(singularities[i], singularities[j]),
            )
        )
    sections.sort(key=lambda s: s.base)
    logger.info(f"event=sections_placed count={len(sections)}")
    return sections


def topology_to_dict(
    t: float, singularities: Sequence[Singularity], sections: Sequence[PoincareSection]
) -> Dict[str, Any]:
    """デバッグ用ダンプ"""
    return {
        "time": t,
        "singularities": [s.to_dict() for s in singularities],
        "sections": [s.to_dict() for s in sections],
    }
