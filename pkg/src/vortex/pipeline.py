#!/usr/bin/env python3
"""
楕円型OECS検出・持続性評価のバッチパイプライン

サブコマンド:
- ingest: CSV または解析流れ仕様をマニフェスト形式に変換
- detect: 特異点 → ポアンカレ断面 → μ掃引 → 閉曲線と帯（curves.jsonl, belts.json）
- score: フラックス・Θ・比較診断量・代表曲線の順位（reports.jsonl）
- verify: 面積交換オラクルと寿命代理指標、Θ と寿命の順位相関（verify.jsonl）
- export: プロット用CSV（OW格子、曲線ごとの φ(s)、Θ/寿命表）
- run: detect から export までを順に実行

使い方:
    python -m src.vortex.pipeline detect --config config/run_config.json
    python -m src.vortex.pipeline run --config config/benchmark_run.json --jobs 4
"""

import hashlib
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
from dotenv import load_dotenv
from scipy.stats import spearmanr

from src.vortex.detection_rules import (
    DEFAULT_HORIZONS_DAYS,
    MU_SWEEP_CONFIG,
    ORACLE_EPS_DT_DAYS,
    OW_THRESHOLD_ALPHAS,
    PV_LABEL,
    SECONDS_PER_DAY,
    FluxSettings,
    LifetimeSettings,
    OrbitSettings,
    Severity,
    TopologySettings,
    ValidationFlag,
)
from src.vortex.exceptions import (
    ConfigError,
    DataError,
    NumericalDegeneracyError,
    OracleUnavailableError,
    VortexError,
)
from src.vortex.field_core import VelocityDataset, diagnostics, load_dataset, ow_regions
from src.vortex.flux_metric import json_number, score_curves, select_representatives
from src.vortex.ingest import ingest
from src.vortex.lagrangian import flux_oracle, lifetime_proxy
from src.vortex.oecs import BRANCHES, ClosedCurve, OecsBelt, default_mu_values, sweep_mu
from src.vortex.topology import (
    classify_all,
    find_singularities,
    place_sections,
    topology_to_dict,
)

logger = logging.getLogger(__name__)

CURVES_FILE = "curves.jsonl"
BELTS_FILE = "belts.json"
TOPOLOGY_FILE = "topology.json"
REPORTS_FILE = "reports.jsonl"
PROFILES_FILE = "profiles.jsonl"
RANKING_FILE = "ranking.json"
VERIFY_FILE = "verify.jsonl"
VERIFY_SUMMARY_FILE = "verify_summary.json"
METADATA_FILE = "metadata.json"
PLOTDATA_DIR = "plotdata"

DEFAULT_OUTPUT_DIR = "output"


# --- 設定 ---


@dataclass
class MuSweepConfig:
    count: int = MU_SWEEP_CONFIG["count"]
    bound_fraction: float = MU_SWEEP_CONFIG["bound_fraction"]
    branches: List[str] = field(default_factory=lambda: list(MU_SWEEP_CONFIG["branches"]))
    values: Optional[List[float]] = None  # 指定時は count/bound_fraction より優先


@dataclass
class ThresholdConfig:
    tol_mu: float = OrbitSettings.tol_mu
    eps_close_cells: float = OrbitSettings.eps_close_cells
    eps_floq: float = FluxSettings.eps_floq
    kappa_fil: float = LifetimeSettings.kappa_fil
    delta_max: float = LifetimeSettings.delta_max
    reliability_space_max: float = FluxSettings.reliability_space_max
    reliability_time_max: float = FluxSettings.reliability_time_max


@dataclass
class ComparisonConfig:
    ow: bool = True
    pv: bool = True
    grad_pv: bool = True

    @property
    def any_enabled(self) -> bool:
        return self.ow or self.pv or self.grad_pv


@dataclass
class OracleConfig:
    enabled: bool = True
    eps_dt: List[float] = field(default_factory=lambda: list(ORACLE_EPS_DT_DAYS))


@dataclass
class RunConfig:
    """実行設定（JSONファイル + CLI引数で上書き）"""

    dataset: Optional[str] = None
    time: float = 0.0
    mu_sweep: MuSweepConfig = field(default_factory=MuSweepConfig)
    thresholds: ThresholdConfig = field(default_factory=ThresholdConfig)
    horizons: List[float] = field(default_factory=lambda: list(DEFAULT_HORIZONS_DAYS))
    outputs: Optional[str] = None
    comparisons: ComparisonConfig = field(default_factory=ComparisonConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    section_length_factor: float = TopologySettings.section_length_factor
    dt_back: Optional[float] = None
    vicinity_radius_m: Optional[float] = None
    jobs: int = 1

    NESTED = {
        "mu_sweep": MuSweepConfig,
        "thresholds": ThresholdConfig,
        "comparisons": ComparisonConfig,
        "oracle": OracleConfig,
    }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        """
        辞書から生成

        Raises:
            ConfigError: 未知のキー、型の不正、値の不正
        """
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        kwargs: Dict[str, Any] = {}
        for key, value in data.items():
            nested = cls.NESTED.get(key)
            if nested is not None:
                if not isinstance(value, dict):
                    raise ConfigError(f"config section '{key}' must be an object")
                sub_known = {f.name for f in fields(nested)}
                sub_unknown = sorted(set(value) - sub_known)
                if sub_unknown:
                    raise ConfigError(f"unknown keys in '{key}': {sub_unknown}")
                kwargs[key] = nested(**value)
            else:
                kwargs[key] = value
        config = cls(**kwargs)
        config.validate()
        return config

    def validate(self) -> None:
        th = self.thresholds
        for name in (f.name for f in fields(th)):
            value = getattr(th, name)
            if not isinstance(value, (int, float)) or not value > 0:
                raise ConfigError(f"threshold '{name}' must be positive, got {value}")
        if not self.horizons or any(h <= 0 for h in self.horizons):
            raise ConfigError("horizons must be a non-empty list of positive days")
        if list(self.horizons) != sorted(self.horizons):
            raise ConfigError(f"horizons must be sorted ascending: {self.horizons}")
        if self.mu_sweep.count < 1 or not self.mu_sweep.bound_fraction > 0:
            raise ConfigError("mu_sweep needs count >= 1 and bound_fraction > 0")
        bad_branches = [b for b in self.mu_sweep.branches if b not in BRANCHES]
        if bad_branches or not self.mu_sweep.branches:
            raise ConfigError(f"mu_sweep.branches must be a subset of {BRANCHES}")
        if self.mu_sweep.values is not None and not all(
            math.isfinite(float(m)) for m in self.mu_sweep.values
        ):
            raise ConfigError("mu_sweep.values must be finite")
        if self.oracle.enabled and (
            not self.oracle.eps_dt or any(e <= 0 for e in self.oracle.eps_dt)
        ):
            raise ConfigError("oracle.eps_dt must be a non-empty list of positive days")
        if not self.section_length_factor > 0:
            raise ConfigError("section_length_factor must be positive")
        if self.dt_back is not None and not self.dt_back > 0:
            raise ConfigError("dt_back must be positive")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @property
    def run_id(self) -> str:
        """解決済み設定の SHA-256（先頭16桁）"""
        payload = json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]

    @property
    def output_dir(self) -> Path:
        return Path(self.outputs or DEFAULT_OUTPUT_DIR)

    def topology_settings(self) -> TopologySettings:
        return TopologySettings(section_length_factor=self.section_length_factor)

    def orbit_settings(self) -> OrbitSettings:
        return OrbitSettings(
            tol_mu=self.thresholds.tol_mu, eps_close_cells=self.thresholds.eps_close_cells
        )

    def flux_settings(self) -> FluxSettings:
        return FluxSettings(
            eps_floq=self.thresholds.eps_floq,
            dt_back=self.dt_back,
            reliability_space_max=self.thresholds.reliability_space_max,
            reliability_time_max=self.thresholds.reliability_time_max,
        )

    def lifetime_settings(self) -> LifetimeSettings:
        return LifetimeSettings(
            kappa_fil=self.thresholds.kappa_fil,
            delta_max=self.thresholds.delta_max,
            vicinity_radius_m=self.vicinity_radius_m,
        )


def load_config(path: Optional[Path] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    設定ファイルを読み込み、None でない上書き値を適用

    Raises:
        ConfigError: ファイル欠損・JSON不正・値の不正
    """
    data: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from e
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    try:
        return RunConfig.from_dict(data)
    except TypeError as e:
        raise ConfigError(f"invalid config value: {e}") from e


# --- ファイル入出力 ---


def _write_json(path: Path, payload: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, ensure_ascii=False, indent=2)


def _write_jsonl(path: Path, records: List[Dict[str, Any]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record, ensure_ascii=False) + "\n")


def _read_json(path: Path) -> Any:
    if not path.exists():
        raise DataError(f"{path.name} not found in {path.parent}; run the previous stage first")
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def _read_jsonl(path: Path) -> List[Dict[str, Any]]:
    if not path.exists():
        raise DataError(f"{path.name} not found in {path.parent}; run the previous stage first")
    with open(path, "r", encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def _parse_theta(value: Any) -> Optional[float]:
    if value is None:
        return None
    return float(value)


def _update_metadata(config: RunConfig, stage: str, info: Dict[str, Any]) -> None:
    """metadata.json に解決済み設定とステージ情報を記録（時刻は含めない）"""
    path = config.output_dir / METADATA_FILE
    metadata: Dict[str, Any] = {}
    if path.exists():
        with open(path, "r", encoding="utf-8") as f:
            metadata = json.load(f)
    if metadata.get("run_id") != config.run_id:
        metadata = {"stages": {}}
    metadata.update(
        {
            "run_id": config.run_id,
            "config": config.to_dict(),
            "pv_label": PV_LABEL,
            "lifetime_proxy": True,
        }
    )
    metadata.setdefault("stages", {})[stage] = info
    _write_json(path, metadata)


def _load(config: RunConfig) -> VelocityDataset:
    if not config.dataset:
        raise ConfigError("dataset manifest path is required (config 'dataset' or --dataset)")
    ds = load_dataset(Path(config.dataset))
    return ds.with_time_step(config.dt_back) if config.dt_back else ds


def _curve_from_record(ds: VelocityDataset, record: Dict[str, Any]) -> ClosedCurve:
    curve = ClosedCurve.from_vertices(
        ds,
        record["vertices"],
        record["mu"],
        record["branch"],
        record["time"],
        record.get("closure_gap", 0.0),
    )
    return replace(curve, curve_id=record["id"])


# --- ステージ ---


@dataclass
class DetectResult:
    belts: List[OecsBelt]
    n_singularities: int
    n_sections: int
    mu_values: List[float]

    @property
    def curves(self) -> List[ClosedCurve]:
        return [c for b in self.belts for c in b.members]


def run_detect(config: RunConfig) -> DetectResult:
    """
    特異点検出からμ掃引までを実行し、curves.jsonl / belts.json / topology.json を書き出す

    曲線が見つからなくても成功（空の出力）。
    """
    ds = _load(config)
    t = float(config.time)
    topo = config.topology_settings()
    orbit = config.orbit_settings()

    found = find_singularities(ds, t, topo)
    singularities = classify_all(ds, t, found, topo, jobs=config.jobs)
    sections = place_sections(ds, singularities, topo, t=t)

    if config.mu_sweep.values is not None:
        mu_values = [float(m) for m in config.mu_sweep.values]
    else:
        mu_values = [
            float(m)
            for m in default_mu_values(ds, t, config.mu_sweep.count, config.mu_sweep.bound_fraction)
        ]
    belts = sweep_mu(ds, t, sections, mu_values, config.mu_sweep.branches, orbit, jobs=config.jobs)

    out = config.output_dir
    records = []
    for belt in belts:
        for curve in belt.members:
            records.append({**curve.to_dict(), "belt_id": belt.belt_id})
    _write_jsonl(out / CURVES_FILE, records)
    _write_json(out / BELTS_FILE, {"time": t, "belts": [b.to_dict() for b in belts]})
    _write_json(out / TOPOLOGY_FILE, topology_to_dict(t, singularities, sections))
    _update_metadata(
        config,
        "detect",
        {
            "mu_values": mu_values,
            "singularities": len(singularities),
            "sections": len(sections),
            "curves": len(records),
            "belts": len(belts),
        },
    )
    logger.info(
        f"event=detect_done t={t} singularities={len(singularities)} sections={len(sections)} "
        f"curves={len(records)} belts={len(belts)}"
    )
    return DetectResult(
        belts=belts, n_singularities=len(singularities), n_sections=len(sections), mu_values=mu_values
    )


def run_score(config: RunConfig) -> List[Dict[str, Any]]:
    """
    detect の出力を評価し reports.jsonl / profiles.jsonl / ranking.json を書き出す

    Raises:
        NumericalDegeneracyError: 曲線が存在し、そのすべてが退化している場合
    """
    ds = _load(config)
    t = float(config.time)
    out = config.output_dir
    curves = [_curve_from_record(ds, r) for r in _read_jsonl(out / CURVES_FILE)]
    by_id = {c.curve_id: c for c in curves}
    belts = [
        OecsBelt(belt_id=b["belt_id"], members=[by_id[m] for m in b["members"] if m in by_id])
        for b in _read_json(out / BELTS_FILE)["belts"]
    ]

    diag = diagnostics(ds, t) if config.comparisons.any_enabled else None
    reports = score_curves(
        curves, ds, t, config.flux_settings(), config.orbit_settings(), diag, jobs=config.jobs
    )
    if reports and not any(r.is_valid for r in reports):
        raise NumericalDegeneracyError(f"all {len(reports)} curves are numerically degenerate")
    representatives = select_representatives(belts, {r.curve_id: r for r in reports})

    comparisons = config.comparisons
    records = []
    profiles = []
    for r in reports:
        if not comparisons.ow:
            r.ow_mean = None
        if not comparisons.pv:
            r.pv_mean = None
        if not comparisons.grad_pv:
            r.grad_pv_mean = None
        records.append(r.to_dict())
        if r.profile is not None and r.profile.phi is not None:
            s = np.arange(r.profile.phi.size) * (r.sigma / r.profile.phi.size)
            profiles.append(
                {
                    "id": r.curve_id,
                    "s": s.tolist(),
                    "x": r.sample_points[:, 0].tolist(),
                    "y": r.sample_points[:, 1].tolist(),
                    "phi": r.profile.phi.tolist(),
                }
            )
    _write_jsonl(out / REPORTS_FILE, records)
    _write_jsonl(out / PROFILES_FILE, profiles)
    ranking = [
        {
            "rank": r.rank,
            "id": r.curve_id,
            "belt_id": r.belt_id,
            "Theta": json_number(r.Theta),
            "area": r.area,
        }
        for r in representatives
    ]
    _write_json(out / RANKING_FILE, {"time": t, "ranking": ranking})
    _update_metadata(
        config,
        "score",
        {
            "curves": len(reports),
            "degenerate": sum(1 for r in reports if not r.is_valid),
            "representatives": len(representatives),
        },
    )
    logger.info(
        f"event=score_done t={t} curves={len(reports)} representatives={len(representatives)}"
    )
    return records


def _verify_one(
    record: Dict[str, Any], ds: VelocityDataset, config: RunConfig
) -> Dict[str, Any]:
    curve = _curve_from_record(ds, record)
    flags: List[ValidationFlag] = []
    oracle = []
    if config.oracle.enabled:
        total = record.get("total_abs_flux")
        for eps_dt in config.oracle.eps_dt:
            try:
                result = flux_oracle(
                    curve, ds, curve.time, eps_dt, orbit_settings=config.orbit_settings(),
                    settings=config.lifetime_settings(),
                )
            except OracleUnavailableError as e:
                logger.warning(f"event=oracle_unavailable curve={curve.curve_id} eps_dt={eps_dt} reason=\"{e}\"")
                flags.append(
                    ValidationFlag.create(
                        "oracle_unavailable", Severity.WARNING, str(e), {"eps_dt": eps_dt}
                    )
                )
                continue
            if total is not None:
                result.predicted_area = float(total) * eps_dt * SECONDS_PER_DAY
            oracle.append(result.to_dict())

    lifetime = lifetime_proxy(curve, ds, config.horizons, config.lifetime_settings())
    flags.extend(lifetime.flags)
    return {
        "id": curve.curve_id,
        "rank": record.get("rank"),
        "Theta": record.get("Theta"),
        **lifetime.to_dict(),
        "oracle": oracle,
        "flags": [f.to_dict() for f in flags],
    }


def theta_lifetime_correlation(results: List[Dict[str, Any]]) -> Optional[float]:
    """Θ と寿命のスピアマン順位相関（2件未満または一定値なら None）"""
    theta = [_parse_theta(r["Theta"]) for r in results]
    lifetime = [r["lifetime_days"] for r in results]
    if len(theta) < 2 or len(set(theta)) < 2 or len(set(lifetime)) < 2:
        return None
    rho, _ = spearmanr(theta, lifetime)
    return float(rho)


def run_verify(config: RunConfig) -> Dict[str, Any]:
    """代表曲線ごとにオラクルと寿命を計算し reports.jsonl に追記、verify.jsonl / verify_summary.json を書き出す"""
    ds = _load(config)
    out = config.output_dir
    reports = _read_jsonl(out / REPORTS_FILE)
    representatives = sorted(
        (r for r in reports if r.get("is_representative")), key=lambda r: r["rank"]
    )
    with ThreadPoolExecutor(max_workers=max(1, config.jobs)) as executor:
        results = list(executor.map(lambda r: _verify_one(r, ds, config), representatives))

    # 代表曲線のレポートに寿命とオラクルを追記
    by_id = {r["id"]: r for r in results}
    for record in reports:
        result = by_id.get(record["id"])
        if result is not None:
            record["lifetime_days"] = result["lifetime_days"]
            record["lifetime_proxy"] = True
            record["oracle"] = result["oracle"]
    _write_jsonl(out / REPORTS_FILE, reports)

    rho = theta_lifetime_correlation(results)
    summary = {
        "representatives": len(results),
        "spearman_theta_lifetime": rho,
        "lifetime_proxy": True,
        "horizons": config.horizons,
    }
    _write_jsonl(out / VERIFY_FILE, results)
    _write_json(out / VERIFY_SUMMARY_FILE, summary)
    _update_metadata(config, "verify", summary)
    logger.info(f"event=verify_done representatives={len(results)} spearman={rho}")
    return summary


def export_plotdata(config: RunConfig) -> Path:
    """
    プロット用CSVを plotdata/ に書き出す

    - ow_grid.csv, pv_grid.csv, grad_pv_grid.csv: ny×nx の格子値（ヘッダなし）
    - ow_region_alpha_<α>.csv: OW < -α·std(OW) のマスク
    - curves/<id>.csv: s, x, y, phi
    - theta_lifetime.csv: 代表曲線ごとの順位・Θ・寿命
    """
    ds = _load(config)
    out = config.output_dir
    plot_dir = out / PLOTDATA_DIR
    (plot_dir / "curves").mkdir(parents=True, exist_ok=True)

    diag = diagnostics(ds, float(config.time))
    grids = {"ow_grid.csv": diag.ow, "pv_grid.csv": diag.pv, "grad_pv_grid.csv": diag.grad_pv_mag}
    for name, values in grids.items():
        pd.DataFrame(values).to_csv(plot_dir / name, header=False, index=False)
    for alpha in OW_THRESHOLD_ALPHAS:
        mask = ow_regions(diag, alpha).astype(int)
        pd.DataFrame(mask).to_csv(plot_dir / f"ow_region_alpha_{alpha}.csv", header=False, index=False)

    for profile in _read_jsonl(out / PROFILES_FILE):
        frame = pd.DataFrame({k: profile[k] for k in ("s", "x", "y", "phi")})
        frame.to_csv(plot_dir / "curves" / f"{profile['id']}.csv", index=False)

    lifetimes: Dict[str, Any] = {}
    verify_path = out / VERIFY_FILE
    if verify_path.exists():
        lifetimes = {r["id"]: r["lifetime_days"] for r in _read_jsonl(verify_path)}
    rows = [
        {
            "rank": r["rank"],
            "id": r["id"],
            "belt_id": r["belt_id"],
            "Theta": r["Theta"],
            "area": r["area"],
            "lifetime_days": lifetimes.get(r["id"]),
        }
        for r in _read_jsonl(out / REPORTS_FILE)
        if r.get("is_representative")
    ]
    table = pd.DataFrame(
        rows, columns=["rank", "id", "belt_id", "Theta", "area", "lifetime_days"]
    ).sort_values("rank")
    table.to_csv(plot_dir / "theta_lifetime.csv", index=False)

    _update_metadata(config, "export", {"directory": PLOTDATA_DIR, "curves": len(rows)})
    logger.info(f"event=export_done directory={plot_dir}")
    return plot_dir


# --- CLI ---


def _config_from_args(args) -> RunConfig:
    jobs = args.jobs
    if jobs is None and os.getenv("VORTEX_JOBS"):
        jobs = int(os.getenv("VORTEX_JOBS"))
    config = load_config(
        Path(args.config) if args.config else None,
        {"dataset": args.dataset, "time": args.time, "outputs": args.output, "jobs": jobs},
    )
    if config.outputs is None:
        config.outputs = os.getenv("VORTEX_OUTPUT_DIR") or DEFAULT_OUTPUT_DIR
    return config


def main(argv: Optional[List[str]] = None):
    """メイン処理"""
    import argparse

    parser = argparse.ArgumentParser(description="楕円型OECSの検出と持続性指標Θの評価")
    parser.add_argument("--verbose", action="store_true", help="DEBUGログを出力")
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="CSVまたは解析流れをマニフェスト形式に変換")
    p_ingest.add_argument("--csv", type=str, default=None, help="入力CSV（time, y, x, u, v または ssh）")
    p_ingest.add_argument("--flow", type=str, default=None, help="解析流れの仕様JSON")
    p_ingest.add_argument("--grid", type=str, default=None, help="格子と時刻の仕様JSON")
    p_ingest.add_argument(
        "--mode", type=str, default="geographic", choices=["geographic", "cartesian"],
        help="CSVの座標系",
    )
    p_ingest.add_argument("--output", type=str, required=True, help="マニフェスト出力先ディレクトリ")

    for name, text in [
        ("detect", "楕円型OECSの検出"),
        ("score", "フラックスとΘの計算・順位付け"),
        ("verify", "オラクルと寿命代理指標による検証"),
        ("export", "プロット用CSVの出力"),
        ("run", "detect → score → verify → export を実行"),
    ]:
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", type=str, default=None, help="設定ファイル（JSON）")
        p.add_argument("--dataset", type=str, default=None, help="データセットのマニフェスト")
        p.add_argument("--time", type=float, default=None, help="評価時刻 [days]")
        p.add_argument("--output", type=str, default=None, help="出力ディレクトリ")
        p.add_argument("--jobs", type=int, default=None, help="並列ワーカー数")

    args = parser.parse_args(argv)

    # .envファイルを読み込み
    load_dotenv()

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )

    try:
        if args.command == "ingest":
            manifest = ingest(
                Path(args.output),
                csv_path=Path(args.csv) if args.csv else None,
                flow_path=Path(args.flow) if args.flow else None,
                grid_path=Path(args.grid) if args.grid else None,
                coordinate_mode=args.mode,
            )
            print(f"マニフェストを作成しました: {manifest}")
            sys.exit(0)

        config = _config_from_args(args)
        print(f"実行ID: {config.run_id}")
        print(f"出力先: {config.output_dir}\n")

        if args.command in ("detect", "run"):
            detected = run_detect(config)
            print(f"検出: 特異点 {detected.n_singularities} 個, 断面 {detected.n_sections} 本, "
                  f"閉曲線 {len(detected.curves)} 本, 帯 {len(detected.belts)} 個")
        if args.command in ("score", "run"):
            records = run_score(config)
            n_rep = sum(1 for r in records if r.get("is_representative"))
            print(f"評価: 曲線 {len(records)} 本, 代表曲線 {n_rep} 本")
        if args.command in ("verify", "run"):
            summary = run_verify(config)
            rho = summary["spearman_theta_lifetime"]
            print(f"検証: 代表曲線 {summary['representatives']} 本, "
                  f"Θと寿命の順位相関 {'計算不可' if rho is None else f'{rho:.3f}'}")
        if args.command in ("export", "run"):
            plot_dir = export_plotdata(config)
            print(f"出力: {plot_dir}")
    except VortexError as e:
        logger.error(f"event=run_failed error={type(e).__name__} detail=\"{e}\"")
        print(f"エラー: {e}")
        sys.exit(e.EXIT_CODE)

    print("\n完了しました。")
    sys.exit(0)


if __name__ == "__main__":
    main()
