#!/usr/bin/env python3
"""
lagrangian.pyのテスト

粒子移流、曲線移流、面積交換オラクル、寿命代理指標のテスト
"""

import math
from dataclasses import replace

import numpy as np
import pytest

from src.vortex.benchflows import AnalyticFlow, rasterize
from src.vortex.detection_rules import (
    PHYSICAL_CONSTANTS,
    SECONDS_PER_DAY,
    VICINITY_RADIUS_DEG,
    LifetimeSettings,
)
from src.vortex.exceptions import ConfigError, DomainError
from src.vortex.field_core import GridSpec, VelocityDataset
from src.vortex.lagrangian import (
    FlowMapRequest,
    advect,
    advect_curve,
    filamentation_measures,
    flow_map,
    flux_oracle,
    lifetime_proxy,
    vicinity_radius,
)
from src.vortex.oecs import BRANCHES, ClosedCurve, DirectionParams, chi

RING_RADIUS = 30000.0


def circle(radius: float, centre=(0.0, 0.0), n: int = 200) -> np.ndarray:
    angles = 2 * np.pi * np.arange(n) / n
    return np.column_stack([centre[0] + radius * np.cos(angles), centre[1] + radius * np.sin(angles)])


def curve_in(flow, radius=10000.0, centre=(0.0, 0.0), n=200, t=0.0) -> ClosedCurve:
    return ClosedCurve.from_vertices(flow, circle(radius, centre, n), 0.0, "plus", t)


def small_grid() -> GridSpec:
    return GridSpec(
        nx=21, ny=21, lon0=-5e4, lat0=-5e4, dlon=5000.0, dlat=5000.0, coordinate_mode="cartesian"
    )


class TestAdvect:
    """粒子移流のテスト"""

    def test_invalid_step(self):
        """刻みが正でない要求が ConfigError になることを確認"""
        with pytest.raises(ConfigError):
            FlowMapRequest(np.zeros((1, 2)), 0.0, 1.0, 0.0)

    def test_step_count(self):
        """区間を刻みで割り切れない場合も終点まで届く刻み数になることを確認"""
        assert FlowMapRequest(np.zeros((1, 2)), 0.0, 1.0, 0.3).n_steps == 4
        assert FlowMapRequest(np.zeros((1, 2)), 2.0, 0.0, 0.5).n_steps == 4

    def test_solid_rotation_period(self):
        """剛体回転で1周期後に元の位置へ戻ることを確認"""
        omega = 1e-5
        flow = AnalyticFlow(kind="solid_rotation", parameters={"omega": omega})
        period = 2 * np.pi / omega / SECONDS_PER_DAY
        seeds = np.array([[20000.0, 0.0], [0.0, -35000.0], [10000.0, 10000.0]])
        end = flow_map(flow, seeds, 0.0, period, 0.01)

        np.testing.assert_allclose(end, seeds, atol=1e-3)

    def test_matches_exact_trajectory(self):
        """純ひずみの RK4 移流が厳密解と一致することを確認"""
        flow = AnalyticFlow(kind="pure_strain", parameters={"alpha": 1e-5})
        seeds = np.array([[1000.0, 20000.0], [-3000.0, -8000.0]])
        end = flow_map(flow, seeds, 0.0, 1.0, 0.02)

        np.testing.assert_allclose(end, flow.trajectory(seeds, 0.0, 1.0), rtol=1e-8)

    def test_uniform_displacement(self):
        """一様流で変位が UΔt になることを確認"""
        flow = AnalyticFlow(kind="uniform", parameters={"U": 0.1, "V": -0.05})
        end = flow_map(flow, [[0.0, 0.0]], 0.0, 0.5, 0.1)

        np.testing.assert_allclose(end[0], [0.1 * 43200.0, -0.05 * 43200.0], rtol=1e-12)

    def test_exiting_particle_frozen(self):
        """領域外に出る粒子が直前位置で凍結されフラグが立つことを確認"""
        flow = AnalyticFlow(kind="uniform", parameters={"U": 0.1, "V": 0.0})
        result = advect(FlowMapRequest(np.array([[95000.0, 0.0], [0.0, 0.0]]), 0.0, 1.0, 0.1), flow)

        assert result.any_exited
        assert result.exited.tolist() == [True, False]
        assert result.positions[0, 0] <= 1e5
        assert result.positions[1, 0] == pytest.approx(8640.0)

    def test_seed_outside_domain(self):
        """出発点が領域外なら DomainError になることを確認"""
        flow = AnalyticFlow(kind="uniform")
        with pytest.raises(DomainError):
            flow_map(flow, [[2e5, 0.0]], 0.0, 1.0, 0.1)

    def test_interval_outside_data(self):
        """データの時間範囲を超える区間が DomainError になることを確認"""
        ds = rasterize(AnalyticFlow(kind="solid_rotation"), small_grid(), [0.0, 1.0])
        with pytest.raises(DomainError):
            flow_map(ds, [[0.0, 0.0]], 0.0, 2.0, 0.1)


class TestAdvectCurve:
    """曲線移流のテスト"""

    def test_strain_refines_and_preserves_area(self):
        """純ひずみで頂点が挿入され、非圧縮なので面積が保たれることを確認"""
        flow = AnalyticFlow(kind="pure_strain", parameters={"alpha": 1e-5}, resolution=1000.0)
        curve = curve_in(flow, n=64)
        moved = advect_curve(curve, flow, 0.0, 1.0, step=0.02)

        assert moved.n_vertices > curve.n_vertices
        assert moved.area == pytest.approx(curve.area, rel=1e-2)
        assert moved.time == 1.0

    def test_keeps_identity(self):
        """移流後も曲線IDが保たれることを確認"""
        flow = AnalyticFlow(kind="solid_rotation")
        curve = replace(curve_in(flow), curve_id="b000-m00")
        moved = advect_curve(curve, flow, 0.0, 0.5)

        assert moved.curve_id == "b000-m00"
        assert moved.area == pytest.approx(curve.area, rel=1e-6)


class TestFluxOracle:
    """面積交換オラクルのテスト"""

    def test_breathing_ring_exchange(self):
        """呼吸するリングで交換面積が 2π rc ṙc εΔt に近いことを確認"""
        flow = AnalyticFlow(
            kind="perturbed_vortex", parameters={"amp": 0.0, "eps_p": 0.05}, resolution=2000.0
        )
        tangent = np.array([0.0, 1.0])
        branch = max(
            BRANCHES,
            key=lambda b: abs(chi(flow, [RING_RADIUS, 0.0], 0.0, DirectionParams(0.0, b)) @ tangent),
        )
        curve = ClosedCurve.from_vertices(flow, circle(RING_RADIUS, n=600), 0.0, branch, 0.0)
        eps_dt = 0.05
        result = flux_oracle(curve, flow, 0.0, eps_dt)
        expected = 2 * np.pi * RING_RADIUS * flow.ring_radius_rate(0.0) * eps_dt * SECONDS_PER_DAY

        assert result.in_area == pytest.approx(expected, rel=5e-2)
        assert result.out_area < 0.05 * result.in_area
        assert result.exchanged_area == pytest.approx(result.in_area + result.out_area)
        assert result.to_dict()["eps_dt"] == eps_dt


class TestLifetime:
    """寿命代理指標のテスト"""

    def test_rigid_rotation_stays_coherent(self):
        """剛体回転では全地平でコヒーレントになることを確認"""
        flow = AnalyticFlow(kind="solid_rotation", parameters={"omega": 1e-5})
        curve = curve_in(flow, centre=(20000.0, 0.0))
        assessment = lifetime_proxy(curve, flow, [1.0, 2.0, 4.0], step=0.05, jobs=2)

        assert assessment.coherent_flags == [True, True, True]
        assert assessment.lifetime == 4.0
        assert assessment.flags == []

    def test_strain_filaments(self):
        """強いひずみで周長が伸び、長い地平ではコヒーレントでなくなることを確認"""
        flow = AnalyticFlow(kind="pure_strain", parameters={"alpha": 1e-5})
        assessment = lifetime_proxy(curve_in(flow), flow, [0.01, 1.0], step=0.01)

        assert assessment.coherent_flags == [True, False]
        assert assessment.lifetime == 0.01
        assert assessment.details[1]["perimeter_ratio"] > LifetimeSettings().kappa_fil

    def test_horizon_beyond_data_skipped(self):
        """データ範囲を超える地平がスキップされフラグが付くことを確認"""
        ds = rasterize(AnalyticFlow(kind="solid_rotation"), small_grid(), [0.0, 0.5, 1.0])
        curve = curve_in(ds)
        assessment = lifetime_proxy(curve, ds, [0.5, 2.0])

        assert assessment.coherent_flags == [True, None]
        assert assessment.lifetime == 0.5
        assert assessment.details[1] == {"horizon": 2.0, "skipped": True}
        assert [f.name for f in assessment.flags] == ["horizon_skipped"]
        assert assessment.to_dict()["lifetime_proxy"] is True

    def test_vicinity_radius_limits_drift(self):
        """重心移動が近傍半径を超えるとコヒーレントでなくなることを確認"""
        flow = AnalyticFlow(kind="uniform", parameters={"U": 0.1, "V": 0.0})
        curve = curve_in(flow, centre=(-50000.0, 0.0))
        near = LifetimeSettings(vicinity_radius_m=5000.0)

        assert lifetime_proxy(curve, flow, [1.0], step=0.1).coherent_flags == [True]
        assert lifetime_proxy(curve, flow, [1.0], settings=near, step=0.1).coherent_flags == [False]

    def test_vicinity_radius_defaults(self):
        """近傍半径の既定値が座標系で切り替わることを確認"""
        cartesian = rasterize(AnalyticFlow(kind="uniform"), small_grid(), [0.0])
        grid = GridSpec(nx=5, ny=5, lon0=0.0, lat0=30.0, dlon=1.0, dlat=1.0)
        zeros = np.zeros((1, 5, 5))
        geographic = VelocityDataset(grid=grid, times=np.array([0.0]), u=zeros, v=zeros)

        assert vicinity_radius(cartesian) is None
        assert vicinity_radius(cartesian, LifetimeSettings(vicinity_radius_m=1.0)) == 1.0
        assert vicinity_radius(geographic) == pytest.approx(
            math.radians(VICINITY_RADIUS_DEG) * PHYSICAL_CONSTANTS["earth_radius"]
        )

    def test_vicinity_radius_follows_grid_radius(self):
        """geographic の既定近傍半径が格子の地球半径から計算されることを確認"""
        grid = GridSpec(nx=5, ny=5, lon0=0.0, lat0=30.0, dlon=1.0, dlat=1.0, earth_radius=1.0e6)
        zeros = np.zeros((1, 5, 5))
        ds = VelocityDataset(grid=grid, times=np.array([0.0]), u=zeros, v=zeros)

        assert vicinity_radius(ds) == pytest.approx(math.radians(VICINITY_RADIUS_DEG) * 1.0e6)

    def test_filamentation_identity(self):
        """移流しない曲線で周長比 1、凸包超過 0、重心移動 0 を確認"""
        flow = AnalyticFlow(kind="solid_rotation")
        curve = curve_in(flow)
        measures = filamentation_measures(curve, curve.vertices, flow)

        assert measures["perimeter_ratio"] == pytest.approx(1.0)
        assert measures["hull_deficiency"] == pytest.approx(0.0, abs=1e-9)
        assert measures["centroid_shift_m"] == pytest.approx(0.0, abs=1e-6)
