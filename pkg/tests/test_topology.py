#!/usr/bin/env python3
"""
topology.pyのテスト

ひずみ速度テンソル場の特異点検出・指数分類・ポアンカレ断面配置のテスト
"""

import numpy as np
import pytest

from src.vortex.benchflows import AnalyticFlow
from src.vortex.detection_rules import TopologySettings
from src.vortex.exceptions import ClassificationError
from src.vortex.field_core import GridSpec, VelocityDataset
from src.vortex.topology import (
    TRISECTOR,
    WEDGE,
    Singularity,
    classify_all,
    classify_singularity,
    find_singularities,
    place_sections,
    poincare_index,
    topology_to_dict,
)

CENTRE = (1234.0, -567.0)


def quadratic_dataset(sign: float) -> VelocityDataset:
    """
    u = c/4 ((x - x0)² + sign (y - y0)²), v = 0

    S11 - S22 = c/2 (x - x0), S12 = sign c/4 (y - y0)。sign = +1 で wedge、-1 で trisector。
    """
    grid = GridSpec(
        nx=21, ny=21, lon0=-10000.0, lat0=-10000.0, dlon=1000.0, dlat=1000.0, coordinate_mode="cartesian"
    )
    X, Y = np.meshgrid(grid.lons, grid.lats)
    c = 1e-9
    u = 0.25 * c * ((X - CENTRE[0]) ** 2 + sign * (Y - CENTRE[1]) ** 2)
    return VelocityDataset(grid=grid, times=np.array([0.0]), u=u[None], v=np.zeros_like(u)[None])


def wedge(x: float, y: float) -> Singularity:
    return Singularity(position=(x, y), kind=WEDGE, index=0.5)


class TestFindSingularities:
    """特異点検出のテスト"""

    def test_wedge_located(self):
        """2次速度場の wedge が格子点外の位置で精密に求まることを確認"""
        ds = quadratic_dataset(+1.0)
        found = find_singularities(ds, 0.0)

        assert len(found) == 1
        np.testing.assert_allclose(found[0].position, CENTRE, atol=1.0)
        assert found[0].kind is None

    def test_identically_zero_strain(self):
        """剛体回転（S ≡ 0）では特異点なしとして空リストを返すことを確認"""
        flow = AnalyticFlow(kind="solid_rotation", extent=(-2e4, 2e4, -2e4, 2e4), resolution=2000.0)

        assert find_singularities(flow, 0.0) == []

    def test_sorted_output(self):
        """結果が位置の辞書順に並ぶことを確認"""
        flow = AnalyticFlow(kind="perturbed_vortex", resolution=5000.0)
        found = find_singularities(flow, 0.0)
        positions = [s.position for s in found]

        assert positions == sorted(positions)


class TestClassification:
    """指数による分類のテスト"""

    def test_wedge_index(self):
        """wedge の指数が +1/2 になることを確認"""
        ds = quadratic_dataset(+1.0)

        assert poincare_index(ds, 0.0, CENTRE) == pytest.approx(0.5, abs=1e-6)
        assert classify_singularity(ds, 0.0, CENTRE) == WEDGE

    def test_trisector_index(self):
        """trisector の指数が -1/2 になることを確認"""
        ds = quadratic_dataset(-1.0)

        assert poincare_index(ds, 0.0, CENTRE) == pytest.approx(-0.5, abs=1e-6)
        assert classify_singularity(ds, 0.0, Singularity(position=CENTRE)) == TRISECTOR

    def test_regular_point_rejected(self):
        """特異点でない点の分類が ClassificationError になることを確認"""
        ds = quadratic_dataset(+1.0)
        with pytest.raises(ClassificationError):
            classify_singularity(ds, 0.0, (6000.0, 5000.0))

    def test_classify_all_drops_unclassifiable(self):
        """分類不能な点が除外され、分類済みの点に指数が付くことを確認"""
        ds = quadratic_dataset(+1.0)
        points = [Singularity(position=CENTRE), Singularity(position=(6000.0, 5000.0))]
        classified = classify_all(ds, 0.0, points, jobs=2)

        assert len(classified) == 1
        assert classified[0].kind == WEDGE
        assert classified[0].index == 0.5


class TestPlaceSections:
    """ポアンカレ断面配置のテスト"""

    def test_mutual_nearest_pair(self):
        """互いに最近傍の wedge ペアだけに断面が置かれることを確認"""
        ds = quadratic_dataset(+1.0)
        singularities = [wedge(0.0, 0.0), wedge(3000.0, 0.0), wedge(7000.0, 0.0)]
        sections = place_sections(ds, singularities)

        assert len(sections) == 1
        section = sections[0]
        assert section.base == pytest.approx((1500.0, 0.0))
        assert section.direction == pytest.approx((0.0, 1.0))
        assert section.half_length == pytest.approx(3000.0)

    def test_trisector_pair_skipped(self):
        """wedge を含まないペアには断面を置かないことを確認"""
        ds = quadratic_dataset(+1.0)
        pair = [
            Singularity(position=(0.0, 0.0), kind=TRISECTOR, index=-0.5),
            Singularity(position=(3000.0, 0.0), kind=TRISECTOR, index=-0.5),
        ]

        assert place_sections(ds, pair) == []

    def test_distant_pair_skipped(self):
        """pair_max_cells 以上離れたペアには断面を置かないことを確認"""
        ds = quadratic_dataset(+1.0)
        settings = TopologySettings(pair_max_cells=2.0)

        assert place_sections(ds, [wedge(-2000.0, 0.0), wedge(2000.0, 0.0)], settings) == []

    def test_section_clipped_to_domain(self):
        """断面の半長が領域内に収まるようクリップされることを確認"""
        ds = quadratic_dataset(+1.0)
        sections = place_sections(ds, [wedge(-1000.0, 7000.0), wedge(1000.0, 7000.0)])

        assert len(sections) == 1
        assert 0.0 < sections[0].half_length < 2000.0

    def test_section_geometry(self):
        """断面上の点と座標変換が一致することを確認"""
        ds = quadratic_dataset(+1.0)
        section = place_sections(ds, [wedge(-2000.0, 0.0), wedge(2000.0, 0.0)])[0]
        points = section.point_at(ds, [-1000.0, 500.0])
        tau, eta = section.coordinates(ds, points)

        np.testing.assert_allclose(points, [[0.0, -1000.0], [0.0, 500.0]], atol=1e-9)
        np.testing.assert_allclose(tau, [-1000.0, 500.0], atol=1e-9)
        np.testing.assert_allclose(eta, 0.0, atol=1e-9)

    def test_topology_dump(self):
        """デバッグ用ダンプに特異点と断面が含まれることを確認"""
        ds = quadratic_dataset(+1.0)
        singularities = [wedge(-2000.0, 0.0), wedge(2000.0, 0.0)]
        sections = place_sections(ds, singularities)
        dump = topology_to_dict(0.0, singularities, sections)

        assert len(dump["singularities"]) == 2
        assert dump["sections"][0]["parent_pair"][0]["kind"] == WEDGE
