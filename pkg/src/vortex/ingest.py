#!/usr/bin/env python3
"""
入力データのマニフェスト形式への変換

機能:
- 長形式CSV（1行 = 時刻・y・x と値）を格子に並べ替えてマニフェストを書き出す
- 解析流れの仕様JSONを格子上にラスタライズしてマニフェストを書き出す

CSVの列: time, y, x と、u と v（速度）または ssh（海面高度）。
geographic では y = 緯度、x = 経度 [deg]、cartesian では [m]。
"""

import logging
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd

from src.vortex.benchflows import load_flow_spec, load_grid_spec, rasterize
from src.vortex.detection_rules import PHYSICAL_CONSTANTS
from src.vortex.exceptions import DataError
from src.vortex.field_core import GridSpec, load_dataset, write_dataset, write_manifest

logger = logging.getLogger(__name__)

KEY_COLUMNS = ["time", "y", "x"]
VALUE_SETS = (["u", "v"], ["ssh"])

# 格子間隔の一様性の許容誤差（間隔比）
SPACING_TOLERANCE = 1e-6


def _uniform_axis(values: np.ndarray, name: str) -> float:
    """昇順の一意値が等間隔であることを確認し、間隔を返す"""
    if values.size < 4:
        raise DataError(f"CSV axis '{name}' needs at least 4 distinct values, found {values.size}")
    steps = np.diff(values)
    step = float(np.median(steps))
    if np.max(np.abs(steps - step)) > SPACING_TOLERANCE * step:
        raise DataError(f"CSV axis '{name}' is not uniformly spaced")
    return step


def _value_columns(df: pd.DataFrame) -> List[str]:
    for columns in VALUE_SETS:
        if all(c in df.columns for c in columns):
            return columns
    raise DataError("CSV must contain columns u and v, or ssh")


def read_csv_grid(
    csv_path: Path,
    coordinate_mode: str = "geographic",
    earth_radius: float = PHYSICAL_CONSTANTS["earth_radius"],
):
    """
    CSVを読み込み (GridSpec, times, {名前: nt×ny×nx 配列}) を返す

    Raises:
        DataError: 列の欠落、重複行、格子の欠け、非一様間隔、非有限値
    """
    csv_path = Path(csv_path)
    if not csv_path.exists():
        raise DataError(f"CSV not found: {csv_path}")
    df = pd.read_csv(csv_path)
    missing = [c for c in KEY_COLUMNS if c not in df.columns]
    if missing:
        raise DataError(f"CSV is missing columns: {missing}")
    columns = _value_columns(df)

    if df.duplicated(subset=KEY_COLUMNS).any():
        raise DataError("CSV has duplicate (time, y, x) rows")
    if not np.all(np.isfinite(df[KEY_COLUMNS + columns].to_numpy(dtype=float))):
        raise DataError("CSV contains non-finite values")

    times = np.sort(df["time"].unique()).astype(float)
    ys = np.sort(df["y"].unique()).astype(float)
    xs = np.sort(df["x"].unique()).astype(float)
    expected = times.size * ys.size * xs.size
    if len(df) != expected:
        raise DataError(
            f"CSV has gaps: {len(df)} rows for {times.size}x{ys.size}x{xs.size} = {expected} grid cells"
        )

    grid = GridSpec(
        nx=int(xs.size),
        ny=int(ys.size),
        lon0=float(xs[0]),
        lat0=float(ys[0]),
        dlon=_uniform_axis(xs, "x"),
        dlat=_uniform_axis(ys, "y"),
        coordinate_mode=coordinate_mode,
        earth_radius=earth_radius,
    )
    ordered = df.sort_values(KEY_COLUMNS)
    shape = (times.size, ys.size, xs.size)
    arrays = {c: ordered[c].to_numpy(dtype=float).reshape(shape) for c in columns}
    return grid, times, arrays


def ingest_csv(
    csv_path: Path,
    output_dir: Path,
    coordinate_mode: str = "geographic",
    earth_radius: float = PHYSICAL_CONSTANTS["earth_radius"],
) -> Path:
    """CSVをマニフェスト形式に変換し、読み戻して検証する"""
    grid, times, arrays = read_csv_grid(csv_path, coordinate_mode, earth_radius)
    constants = dict(PHYSICAL_CONSTANTS) if "ssh" in arrays else None
    manifest = write_manifest(output_dir, grid, times, arrays, constants=constants)
    load_dataset(manifest)
    logger.info(
        f"event=ingest_csv source={csv_path} nt={times.size} ny={grid.ny} nx={grid.nx} "
        f"fields={','.join(arrays)}"
    )
    return manifest


def ingest_flow(flow_path: Path, grid_path: Path, output_dir: Path) -> Path:
    """解析流れを格子上にラスタライズしてマニフェストを書き出す"""
    flow = load_flow_spec(flow_path)
    grid, times = load_grid_spec(grid_path)
    ds = rasterize(flow, grid, times)
    manifest = write_dataset(ds, output_dir)
    logger.info(
        f"event=ingest_flow kind={flow.kind} nt={ds.nt} ny={grid.ny} nx={grid.nx} out={manifest}"
    )
    return manifest


def ingest(
    output_dir: Path,
    csv_path: Optional[Path] = None,
    flow_path: Optional[Path] = None,
    grid_path: Optional[Path] = None,
    coordinate_mode: str = "geographic",
) -> Path:
    """CSVまたは流れ仕様のどちらか一方から取り込む"""
    if csv_path is not None:
        return ingest_csv(csv_path, output_dir, coordinate_mode)
    if flow_path is not None and grid_path is not None:
        return ingest_flow(flow_path, grid_path, output_dir)
    raise DataError("ingest needs either a CSV file or both a flow spec and a grid spec")
