import hashlib
import io
import json
import os
from datetime import datetime
from typing import Any, Dict, List, Optional, Sequence

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import openpyxl
import pandas as pd
from openpyxl.styles import Alignment, Font, PatternFill
from openpyxl.utils import get_column_letter

from config.settings import APP_CONFIG, OUTPUT_CONFIG
from .base_service import BaseProcessor
from .models import OutputFile, RunManifest


def _json_default(value: Any):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, datetime):
        return value.isoformat()
    if hasattr(value, "model_dump"):
        return value.model_dump()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def sha256_of(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()


class ReportWriter(BaseProcessor):
    """
    実行結果の書き出し（CSV / JSON / SVG / xlsx / マニフェスト）

    書いたファイルはすべて記録し、マニフェストに SHA-256 とともに列挙する。
    """

    def __init__(self, output_dir: str):
        BaseProcessor.__init__(self, "ReportWriter")
        self.output_dir = output_dir
        self.outputs: List[OutputFile] = []
        self.tables: Dict[str, pd.DataFrame] = {}

    def _path(self, filename: str) -> str:
        os.makedirs(self.output_dir, exist_ok=True)
        return os.path.join(self.output_dir, filename)

    def _record(self, path: str, hashed: bool = True):
        relative = os.path.relpath(path, self.output_dir)
        self.outputs.append(OutputFile(path=relative, sha256=sha256_of(path), hashed=hashed))

    def write_table(self, name: str, frame: pd.DataFrame) -> str:
        """CSV（インデックスなし、浮動小数点は固定フォーマット）"""
        path = self._path(f"{name}.csv")
        frame.to_csv(path, index=False, float_format=OUTPUT_CONFIG["float_format"], lineterminator="\n")
        self.tables[name] = frame
        self._record(path)
        self.log_info(f"テーブルを書き出しました: {name}.csv ({len(frame)}行)")
        return path

    def write_summary(self, name: str, summary: Dict[str, Any]) -> str:
        """JSON サマリー（キーはソート済み、schema_version を付与）"""
        path = self._path(f"{name}.json")
        payload = {"schema_version": APP_CONFIG["schema_version"], **summary}
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            json.dump(payload, f, sort_keys=True, indent=2, ensure_ascii=False, default=_json_default)
            f.write("\n")
        self._record(path)
        return path

    def write_svg_plot(self, name: str, x: Sequence[float], series: Dict[str, Sequence[float]],
                       xlabel: str = "", ylabel: str = "", logx: bool = False, logy: bool = False) -> str:
        """単一ファイルで完結する SVG（描画データを XML コメントとして埋め込む）"""
        fig, ax = plt.subplots(figsize=(6, 4))
        for label, values in series.items():
            ax.plot(x, values, marker="o", label=label)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if logx:
            ax.set_xscale("log")
        if logy:
            ax.set_yscale("log")
        if len(series) > 1:
            ax.legend()
        fig.tight_layout()
        buffer = io.StringIO()
        fig.savefig(buffer, format="svg")
        plt.close(fig)

        data = json.dumps({"x": list(x), "series": {k: list(v) for k, v in series.items()}},
                          default=_json_default).replace("--", "- -")
        svg = buffer.getvalue()
        marker = svg.find("<svg")
        svg = svg[:marker] + f"<!-- data: {data} -->\n" + svg[marker:]
        path = self._path(f"{name}.svg")
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(svg)
        self._record(path, hashed=False)
        return path

    def write_workbook(self, tables: Optional[Dict[str, pd.DataFrame]] = None) -> Optional[str]:
        """全テーブルを1つの xlsx にまとめる（シートごとにヘッダー装飾）"""
        tables = tables if tables is not None else self.tables
        if not tables:
            return None
        workbook = openpyxl.Workbook()
        workbook.remove(workbook.active)
        for name, frame in tables.items():
            sheet = workbook.create_sheet(title=name[:31])
            for col_idx, column in enumerate(frame.columns, start=1):
                cell = sheet.cell(row=1, column=col_idx, value=str(column))
                cell.font = Font(bold=True)
                cell.fill = PatternFill(start_color="D9E1F2", end_color="D9E1F2", fill_type="solid")
                cell.alignment = Alignment(horizontal="center", vertical="center")
                sheet.column_dimensions[get_column_letter(col_idx)].width = max(12, len(str(column)) + 2)
            failing_col = list(frame.columns).index("passed") + 1 if "passed" in frame.columns else None
            for row_idx, row in enumerate(frame.itertuples(index=False), start=2):
                for col_idx, value in enumerate(row, start=1):
                    if isinstance(value, (np.generic,)):
                        value = value.item()
                    cell = sheet.cell(row=row_idx, column=col_idx, value=value)
                    cell.alignment = Alignment(horizontal="left", vertical="center")
                # 不合格の行は赤背景
                if failing_col is not None and row[failing_col - 1] is not None and not bool(row[failing_col - 1]):
                    for col_idx in range(1, len(frame.columns) + 1):
                        sheet.cell(row=row_idx, column=col_idx).fill = PatternFill(
                            start_color="FFB3B3", end_color="FFB3B3", fill_type="solid")
        path = self._path(OUTPUT_CONFIG["workbook_filename"])
        workbook.save(path)
        self._record(path, hashed=False)
        self.log_info(f"ワークブックを保存しました: {OUTPUT_CONFIG['workbook_filename']}")
        return path

    def write_manifest(self, command: str, resolved_config: Dict[str, Any], seeds: Dict[str, int],
                       started_at: datetime, wall_clock_seconds: float, stage_timings: Dict[str, float],
                       unit_conversions: List[Dict[str, Any]], exit_code: int) -> str:
        manifest = RunManifest(
            command=command,
            resolved_config=json.loads(json.dumps(resolved_config, default=_json_default)),
            seeds=seeds,
            unit_conversions=unit_conversions,
            started_at=started_at.isoformat(),
            wall_clock_seconds=wall_clock_seconds,
            stage_timings=stage_timings,
            outputs=self.outputs,
            exit_code=exit_code,
        )
        path = self._path(OUTPUT_CONFIG["manifest_filename"])
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            json.dump(manifest.model_dump(), f, sort_keys=True, indent=2, ensure_ascii=False)
            f.write("\n")
        self.log_info(f"マニフェストを書き出しました（出力 {len(self.outputs)} 件）")
        return path

    def process(self, tables: Dict[str, pd.DataFrame], summaries: Dict[str, Dict[str, Any]]) -> Dict[str, Any]:
        """テーブルとサマリーをまとめて書き出す"""
        try:
            for name, frame in tables.items():
                self.write_table(name, frame)
            for name, summary in summaries.items():
                self.write_summary(name, summary)
            if OUTPUT_CONFIG["export_workbook"]:
                self.write_workbook()
            return {"success": True, "outputs": [o.path for o in self.outputs]}
        except Exception as e:
            return self.handle_exception("結果書き出し", e)
