#!/usr/bin/env python3
"""
pipeline.pyのテスト

実行設定の検証、score/verify/export ステージの出力、CLIの終了コードのテスト
"""

import json
import os
import tempfile
from dataclasses import replace
from pathlib import Path
from unittest.mock import patch

import numpy as np
import pandas as pd
import pytest

from src.vortex.benchflows import AnalyticFlow, rasterize
from src.vortex.exceptions import ConfigError, DataError, NumericalDegeneracyError
from src.vortex.field_core import GridSpec, write_dataset
from src.vortex.oecs import BRANCHES, ClosedCurve, DirectionParams, chi
from src.vortex.pipeline import (
    BELTS_FILE,
    CURVES_FILE,
    METADATA_FILE,
    PLOTDATA_DIR,
    PROFILES_FILE,
    RANKING_FILE,
    REPORTS_FILE,
    TOPOLOGY_FILE,
    VERIFY_FILE,
    VERIFY_SUMMARY_FILE,
    OracleConfig,
    RunConfig,
    export_plotdata,
    load_config,
    main,
    run_detect,
    run_score,
    run_verify,
    theta_lifetime_correlation,
)

RING_RADIUS = 30000.0


def write_json(path: Path, payload) -> Path:
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


@pytest.fixture(scope="module")
def workspace():
    """
    定常軸対称渦の1スナップショットと、半径 rc0 の閉曲線を置いた出力ディレクトリ

    detect の出力（curves.jsonl, belts.json）を手で用意し、score 以降を検証する。
    """
    with tempfile.TemporaryDirectory() as tmpdir:
        root = Path(tmpdir)
        flow = AnalyticFlow(kind="perturbed_vortex", parameters={"amp": 0.0}, resolution=2500.0)
        grid = GridSpec(
            nx=81, ny=81, lon0=-1e5, lat0=-1e5, dlon=2500.0, dlat=2500.0, coordinate_mode="cartesian"
        )
        ds = rasterize(flow, grid, [0.0])
        manifest = write_dataset(ds, root / "dataset")

        tangent = np.array([0.0, 1.0])
        branch = max(
            BRANCHES,
            key=lambda b: abs(chi(flow, [RING_RADIUS, 0.0], 0.0, DirectionParams(0.0, b)) @ tangent),
        )
        angles = 2 * np.pi * np.arange(400) / 400
        vertices = RING_RADIUS * np.column_stack([np.cos(angles), np.sin(angles)])
        curve = replace(
            ClosedCurve.from_vertices(ds, vertices, 0.0, branch, 0.0), curve_id="b000-m00"
        )

        out = root / "output"
        out.mkdir()
        with open(out / CURVES_FILE, "w", encoding="utf-8") as f:
            f.write(json.dumps({**curve.to_dict(), "belt_id": 0}) + "\n")
        write_json(
            out / BELTS_FILE,
            {"time": 0.0, "belts": [{"belt_id": 0, "members": ["b000-m00"], "representative": None}]},
        )
        config = RunConfig(
            dataset=str(manifest),
            outputs=str(out),
            horizons=[0.5, 1.0],
            oracle=OracleConfig(enabled=True, eps_dt=[0.05]),
        )
        config.validate()
        yield config


class TestRunConfig:
    """実行設定のテスト"""

    def test_defaults_valid(self):
        """既定値の設定が検証を通ることを確認"""
        config = RunConfig.from_dict({})

        assert config.horizons == [7, 15, 30, 60, 90, 120]
        assert config.mu_sweep.count == 11
        assert config.jobs == 1

    def test_unknown_key(self):
        """未知のキーが ConfigError になることを確認"""
        with pytest.raises(ConfigError, match="unknown config keys"):
            RunConfig.from_dict({"datset": "x"})

    def test_unknown_nested_key(self):
        """入れ子セクションの未知キーが ConfigError になることを確認"""
        with pytest.raises(ConfigError, match="unknown keys in 'thresholds'"):
            RunConfig.from_dict({"thresholds": {"tol": 0.1}})

    def test_section_must_be_object(self):
        """入れ子セクションが辞書でなければ ConfigError になることを確認"""
        with pytest.raises(ConfigError, match="must be an object"):
            RunConfig.from_dict({"oracle": True})

    @pytest.mark.parametrize(
        "data,match",
        [
            ({"thresholds": {"eps_floq": 0}}, "eps_floq"),
            ({"thresholds": {"kappa_fil": -1.2}}, "kappa_fil"),
            ({"horizons": []}, "horizons"),
            ({"horizons": [30, 7]}, "sorted"),
            ({"horizons": [7, -1]}, "horizons"),
            ({"mu_sweep": {"count": 0}}, "mu_sweep"),
            ({"mu_sweep": {"branches": ["up"]}}, "branches"),
            ({"mu_sweep": {"values": [0.0, float("nan")]}}, "finite"),
            ({"oracle": {"eps_dt": [0.1, 0.0]}}, "eps_dt"),
            ({"section_length_factor": 0}, "section_length_factor"),
            ({"dt_back": -0.1}, "dt_back"),
            ({"jobs": 0}, "jobs"),
        ],
    )
    def test_invalid_values(self, data, match):
        """不正な値が ConfigError になることを確認"""
        with pytest.raises(ConfigError, match=match):
            RunConfig.from_dict(data)

    def test_disabled_oracle_skips_eps_check(self):
        """オラクル無効時は eps_dt を検証しないことを確認"""
        config = RunConfig.from_dict({"oracle": {"enabled": False, "eps_dt": []}})

        assert not config.oracle.enabled

    def test_run_id_deterministic(self):
        """同じ設定なら同じ実行ID、値が変われば別の実行IDになることを確認"""
        a = RunConfig.from_dict({"time": 7.0})
        b = RunConfig.from_dict({"time": 7.0})
        c = RunConfig.from_dict({"time": 8.0})

        assert a.run_id == b.run_id
        assert a.run_id != c.run_id
        assert len(a.run_id) == 16

    def test_settings_carry_thresholds(self):
        """閾値が各段の設定に渡ることを確認"""
        config = RunConfig.from_dict(
            {"thresholds": {"tol_mu": 0.1, "kappa_fil": 1.5}, "dt_back": 0.5, "vicinity_radius_m": 1e4}
        )

        assert config.orbit_settings().tol_mu == 0.1
        assert config.lifetime_settings().kappa_fil == 1.5
        assert config.lifetime_settings().vicinity_radius_m == 1e4
        assert config.flux_settings().dt_back == 0.5


class TestLoadConfig:
    """設定ファイル読み込みのテスト"""

    def test_file_and_overrides(self):
        """ファイルの値が None でない上書き値で置き換わることを確認"""
        with tempfile.TemporaryDirectory() as tmpdir:
            path = write_json(Path(tmpdir) / "run.json", {"dataset": "a/manifest.json", "time": 7.0})
            config = load_config(path, {"time": 9.0, "dataset": None})

            assert config.time == 9.0
            assert config.dataset == "a/manifest.json"

    def test_missing_file(self):
        """存在しない設定ファイルが ConfigError になることを確認"""
        with pytest.raises(ConfigError, match="not found"):
            load_config(Path("/nonexistent/run.json"))

    def test_invalid_json(self):
        """JSONとして不正な設定ファイルが ConfigError になることを確認"""
        with tempfile.TemporaryDirectory() as tmpdir:
            path = Path(tmpdir) / "run.json"
            path.write_text("{time: 7", encoding="utf-8")
            with pytest.raises(ConfigError, match="not valid JSON"):
                load_config(path)

    def test_repository_configs_load(self):
        """同梱の設定ファイルが検証を通ることを確認"""
        root = Path(__file__).resolve().parent.parent / "config"
        for name in ("run_config.json", "benchmark_run.json"):
            assert isinstance(load_config(root / name), RunConfig)


class TestStages:
    """detect / score / verify / export ステージのテスト"""

    def test_detect_outputs(self, workspace):
        """detect が件数の整合した curves.jsonl / belts.json / topology.json を書き出すことを確認"""
        with tempfile.TemporaryDirectory() as tmpdir:
            config = replace(workspace, outputs=tmpdir)
            config.mu_sweep = replace(config.mu_sweep, values=[0.0])
            result = run_detect(config)
            out = Path(tmpdir)

            with open(out / CURVES_FILE, "r", encoding="utf-8") as f:
                lines = [line for line in f if line.strip()]
            with open(out / BELTS_FILE, "r", encoding="utf-8") as f:
                belts = json.load(f)["belts"]
            with open(out / METADATA_FILE, "r", encoding="utf-8") as f:
                metadata = json.load(f)

            assert len(lines) == len(result.curves)
            assert len(belts) == len(result.belts)
            assert (out / TOPOLOGY_FILE).exists()
            assert result.mu_values == [0.0]
            assert metadata["stages"]["detect"]["curves"] == len(lines)

    @staticmethod
    def detect_config(flow: AnalyticFlow, grid: GridSpec, tmpdir: str) -> RunConfig:
        manifest = write_dataset(rasterize(flow, grid, [0.0]), Path(tmpdir) / "dataset")
        out = Path(tmpdir) / "output"
        out.mkdir()
        return RunConfig.from_dict(
            {
                "dataset": str(manifest),
                "outputs": str(out),
                "mu_sweep": {"count": 5, "branches": ["plus"]},
            }
        )

    def test_detect_finds_vortex_belt(self):
        """ラスタ化した摂動渦から少なくとも1つの帯が検出されることを確認"""
        grid = GridSpec(
            nx=113, ny=113, lon0=-1.4e5, lat0=-1.4e5, dlon=2500.0, dlat=2500.0,
            coordinate_mode="cartesian",
        )
        with tempfile.TemporaryDirectory() as tmpdir:
            config = self.detect_config(AnalyticFlow(kind="perturbed_vortex"), grid, tmpdir)
            result = run_detect(config)

            assert len(result.belts) >= 1
            assert all(len(belt.members) >= 1 for belt in result.belts)
            with open(config.output_dir / BELTS_FILE, "r", encoding="utf-8") as f:
                assert len(json.load(f)["belts"]) == len(result.belts)

    def test_detect_pure_strain_empty(self):
        """一様な歪み流れでは帯が検出されず、空の出力で成功することを確認"""
        grid = GridSpec(
            nx=21, ny=21, lon0=-5e4, lat0=-5e4, dlon=5000.0, dlat=5000.0,
            coordinate_mode="cartesian",
        )
        with tempfile.TemporaryDirectory() as tmpdir:
            config = self.detect_config(AnalyticFlow(kind="pure_strain"), grid, tmpdir)
            result = run_detect(config)

            assert result.belts == []
            with open(config.output_dir / CURVES_FILE, "r", encoding="utf-8") as f:
                assert [line for line in f if line.strip()] == []

    def test_score_outputs(self, workspace):
        """閉曲線が評価され、代表曲線として順位1になることを確認"""
        records = run_score(workspace)
        out = workspace.output_dir

        assert len(records) == 1
        record = records[0]
        assert record["id"] == "b000-m00"
        assert record["is_representative"] is True
        assert record["rank"] == 1
        assert record["error"] is None

        with open(out / RANKING_FILE, "r", encoding="utf-8") as f:
            ranking = json.load(f)["ranking"]
        assert [r["id"] for r in ranking] == ["b000-m00"]
        assert (out / REPORTS_FILE).exists()

        with open(out / PROFILES_FILE, "r", encoding="utf-8") as f:
            profile = json.loads(f.readline())
        assert len(profile["s"]) == len(profile["phi"]) == len(profile["x"])

    def test_score_deterministic(self, workspace):
        """同じ入力で reports.jsonl がバイト単位で一致することを確認"""
        run_score(workspace)
        first = (workspace.output_dir / REPORTS_FILE).read_bytes()
        run_score(workspace)
        second = (workspace.output_dir / REPORTS_FILE).read_bytes()

        assert first == second

    def test_verify_outputs(self, workspace):
        """代表曲線の寿命とオラクルが記録されることを確認"""
        run_score(workspace)
        summary = run_verify(workspace)
        out = workspace.output_dir

        assert summary["representatives"] == 1
        assert summary["spearman_theta_lifetime"] is None
        assert summary["lifetime_proxy"] is True

        with open(out / VERIFY_FILE, "r", encoding="utf-8") as f:
            result = json.loads(f.readline())
        assert result["id"] == "b000-m00"
        assert result["horizons"] == [0.5, 1.0]
        assert len(result["coherent_flags"]) == 2
        unavailable = [f for f in result["flags"] if f["name"] == "oracle_unavailable"]
        assert len(result["oracle"]) + len(unavailable) == 1
        assert (out / VERIFY_SUMMARY_FILE).exists()

        with open(out / REPORTS_FILE, "r", encoding="utf-8") as f:
            reports = [json.loads(line) for line in f if line.strip()]
        record = next(r for r in reports if r["id"] == "b000-m00")
        assert record["lifetime_days"] == result["lifetime_days"]
        assert record["lifetime_proxy"] is True
        assert record["oracle"] == result["oracle"]
        assert record["Theta"] == result["Theta"]

    def test_export_outputs(self, workspace):
        """プロット用CSVが書き出されることを確認"""
        run_score(workspace)
        run_verify(workspace)
        plot_dir = export_plotdata(workspace)

        assert plot_dir == workspace.output_dir / PLOTDATA_DIR
        ow = pd.read_csv(plot_dir / "ow_grid.csv", header=None)
        assert ow.shape == (81, 81)
        assert (plot_dir / "ow_region_alpha_0.2.csv").exists()
        assert (plot_dir / "ow_region_alpha_1.0.csv").exists()

        profile = pd.read_csv(plot_dir / "curves" / "b000-m00.csv")
        assert list(profile.columns) == ["s", "x", "y", "phi"]

        table = pd.read_csv(plot_dir / "theta_lifetime.csv")
        assert table["id"].tolist() == ["b000-m00"]
        assert list(table.columns) == ["rank", "id", "belt_id", "Theta", "area", "lifetime_days"]

    def test_metadata_records_stages(self, workspace):
        """metadata.json に実行IDと各ステージの情報が残ることを確認"""
        run_score(workspace)
        with open(workspace.output_dir / METADATA_FILE, "r", encoding="utf-8") as f:
            metadata = json.load(f)

        assert metadata["run_id"] == workspace.run_id
        assert metadata["lifetime_proxy"] is True
        assert metadata["stages"]["score"]["curves"] == 1

    def test_score_without_detect(self):
        """detect の出力がない場合に DataError になることを確認"""
        with tempfile.TemporaryDirectory() as tmpdir:
            flow = AnalyticFlow(kind="solid_rotation")
            grid = GridSpec(
                nx=5, ny=5, lon0=-2e4, lat0=-2e4, dlon=1e4, dlat=1e4, coordinate_mode="cartesian"
            )
            manifest = write_dataset(rasterize(flow, grid, [0.0]), Path(tmpdir) / "dataset")
            config = RunConfig(dataset=str(manifest), outputs=str(Path(tmpdir) / "output"))
            with pytest.raises(DataError, match="curves.jsonl"):
                run_score(config)


class TestCorrelation:
    """Θ と寿命の順位相関のテスト"""

    def test_monotone(self):
        """Θ と寿命が同順なら相関 1 になることを確認"""
        results = [
            {"Theta": "inf", "lifetime_days": 120.0},
            {"Theta": 50.0, "lifetime_days": 60.0},
            {"Theta": 2.0, "lifetime_days": 7.0},
        ]

        assert theta_lifetime_correlation(results) == pytest.approx(1.0)

    def test_undefined(self):
        """1件だけ、または寿命が一定なら None になることを確認"""
        assert theta_lifetime_correlation([{"Theta": 1.0, "lifetime_days": 7.0}]) is None
        constant = [{"Theta": 1.0, "lifetime_days": 7.0}, {"Theta": 2.0, "lifetime_days": 7.0}]
        assert theta_lifetime_correlation(constant) is None


class TestMain:
    """CLIの終了コードのテスト"""

    def test_missing_dataset(self):
        """データセット未指定で終了コード 2 になることを確認"""
        with tempfile.TemporaryDirectory() as tmpdir:
            with pytest.raises(SystemExit) as exc:
                main(["detect", "--output", str(Path(tmpdir) / "out")])

        assert exc.value.code == 2

    def test_missing_config_file(self):
        """存在しない設定ファイルで終了コード 2 になることを確認"""
        with pytest.raises(SystemExit) as exc:
            main(["score", "--config", "/nonexistent/run.json"])

        assert exc.value.code == 2

    def test_ingest_without_input(self):
        """入力なしの ingest で終了コード 3 になることを確認"""
        with tempfile.TemporaryDirectory() as tmpdir:
            with pytest.raises(SystemExit) as exc:
                main(["ingest", "--output", tmpdir])

        assert exc.value.code == 3

    def test_ingest_flow_success(self):
        """流れ仕様の ingest が成功し、マニフェストが作られることを確認"""
        with tempfile.TemporaryDirectory() as tmpdir:
            flow_path = write_json(Path(tmpdir) / "flow.json", {"kind": "uniform"})
            grid_path = write_json(
                Path(tmpdir) / "grid.json",
                {
                    "grid": {
                        "nx": 5, "ny": 5, "lon0": -2e4, "lat0": -2e4,
                        "dlon": 1e4, "dlat": 1e4, "mode": "cartesian",
                    },
                    "times": [0.0],
                },
            )
            out = Path(tmpdir) / "dataset"
            with pytest.raises(SystemExit) as exc:
                main(["ingest", "--flow", str(flow_path), "--grid", str(grid_path), "--output", str(out)])

            assert exc.value.code == 0
            assert (out / "manifest.json").exists()

    def test_unknown_command(self):
        """未知のサブコマンドで argparse の終了コード 2 になることを確認"""
        with pytest.raises(SystemExit) as exc:
            main(["plot"])

        assert exc.value.code == 2

    def test_degenerate_run_exit_code(self):
        """ステージが NumericalDegeneracyError を送出すると終了コード 4 になることを確認"""
        with tempfile.TemporaryDirectory() as tmpdir:
            with patch(
                "src.vortex.pipeline.run_detect",
                side_effect=NumericalDegeneracyError("all curves are numerically degenerate"),
            ):
                with pytest.raises(SystemExit) as exc:
                    main(["detect", "--dataset", "dummy/manifest.json", "--output", tmpdir])

        assert exc.value.code == 4

    def test_environment_defaults(self):
        """--output と --jobs が未指定なら環境変数の値が使われることを確認"""
        with tempfile.TemporaryDirectory() as tmpdir:
            env = {"VORTEX_OUTPUT_DIR": tmpdir, "VORTEX_JOBS": "3"}
            with patch.dict(os.environ, env), patch("src.vortex.pipeline.export_plotdata") as export:
                export.return_value = Path(tmpdir) / "plotdata"
                with pytest.raises(SystemExit) as exc:
                    main(["export", "--dataset", "dummy/manifest.json"])

            config = export.call_args[0][0]
            assert exc.value.code == 0
            assert config.outputs == tmpdir
            assert config.jobs == 3
