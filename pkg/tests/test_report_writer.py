import json
import os
from datetime import datetime

import numpy as np
import openpyxl
import pandas as pd
import pytest

from core.report_writer import ReportWriter, sha256_of


def test_table_and_summary_are_hashed(tmp_path):
    writer = ReportWriter(str(tmp_path))
    frame = pd.DataFrame({"N": [1, 2], "predicted": [0.0025, 1 / 3]})
    path = writer.write_table("decay", frame)
    with open(path, encoding="utf-8") as f:
        assert f.read() == "N,predicted\n1,0.0025\n2,0.333333333333\n"
    writer.write_summary("decay_summary", {"b": np.float64(1.5), "a": np.int64(2)})
    with open(os.path.join(tmp_path, "decay_summary.json"), encoding="utf-8") as f:
        summary = json.load(f)
    assert summary == {"a": 2, "b": 1.5, "schema_version": "1.0"}
    assert [o.path for o in writer.outputs] == ["decay.csv", "decay_summary.json"]
    assert writer.outputs[0].sha256 == sha256_of(path)


def test_svg_embeds_plot_data(tmp_path):
    writer = ReportWriter(str(tmp_path))
    path = writer.write_svg_plot("rate", [1, 2, 3], {"measured": [1.0, 2.0, 3.0]}, xlabel="N", ylabel="rate")
    with open(path, encoding="utf-8") as f:
        svg = f.read()
    assert "<!-- data: " in svg
    assert '"measured": [1.0, 2.0, 3.0]' in svg
    assert writer.outputs[-1].hashed is False


def test_workbook_marks_failing_rows(tmp_path):
    writer = ReportWriter(str(tmp_path))
    checks = pd.DataFrame({"name": ["ok", "bad"], "passed": [True, False]})
    path = writer.write_workbook({"checks": checks})
    sheet = openpyxl.load_workbook(path)["checks"]
    assert sheet.cell(row=1, column=1).font.bold
    assert sheet.cell(row=3, column=1).fill.start_color.rgb.endswith("FFB3B3")
    assert not sheet.cell(row=2, column=1).fill.start_color.rgb.endswith("FFB3B3")


def test_manifest_lists_outputs(tmp_path):
    writer = ReportWriter(str(tmp_path))
    writer.write_table("t", pd.DataFrame({"x": [1]}))
    path = writer.write_manifest("sectors", {"seed": 3}, {"seed": 3}, datetime(2024, 1, 1), 0.5,
                                 {"sectors": 0.4}, [], 0)
    with open(path, encoding="utf-8") as f:
        manifest = json.load(f)
    assert manifest["command"] == "sectors"
    assert manifest["outputs"][0]["path"] == "t.csv"
    assert manifest["exit_code"] == 0


def test_process_reports_failures_as_result_dict(tmp_path):
    blocker = tmp_path / "blocked"
    blocker.write_text("not a directory")
    writer = ReportWriter(str(blocker))
    result = writer.process({"t": pd.DataFrame({"x": [1]})}, {})
    assert result["success"] is False
    assert result["operation"] == "結果書き出し"
