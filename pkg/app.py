import argparse
import logging
import sys
import time
from datetime import datetime
from typing import List, Optional

import pandas as pd
from dotenv import load_dotenv

from config.settings import APP_CONFIG, OUTPUT_CONFIG
from core.base_service import configure_logging
from core.exceptions import ConfigurationError
from core.experiment_engine import COMMANDS, ExperimentEngine, default_output_dir, load_config_file
from core.report_writer import ReportWriter

logger = logging.getLogger("app")

EXIT_OK = 0
EXIT_TOLERANCE = 1
EXIT_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=APP_CONFIG["prog"],
        description="協同増強（超放射・超移動）の数値検証ツール",
    )
    parser.add_argument("command", choices=list(COMMANDS) + ["all"], help="実行する検証")
    parser.add_argument("--config", metavar="PATH", help="プリセットを上書きするJSON設定ファイル")
    parser.add_argument("--out", metavar="DIR", help="出力ディレクトリ（既定は環境変数または results）")
    parser.add_argument("--seed", type=int, help="乱数シード（非負整数）")
    parser.add_argument("--workers", type=int, help="並列ワーカー数")
    parser.add_argument("--preset", default="paper-defaults", help="実験プリセットID")
    parser.add_argument("--verbose", action="store_true", help="DEBUGログを出力")
    return parser


def write_outputs(writer: ReportWriter, result: dict, export_workbook: bool):
    for name, frame in result["tables"].items():
        writer.write_table(name, frame)
    if result["checks"]:
        writer.write_table("checks", pd.DataFrame(result["checks"]))
    for name, summary in result["summary"].items():
        writer.write_summary(f"{name}_summary", summary)
    for plot in result["plots"]:
        writer.write_svg_plot(
            plot["name"], plot["x"], plot["series"],
            xlabel=plot.get("xlabel", ""), ylabel=plot.get("ylabel", ""),
            logx=plot.get("logx", False), logy=plot.get("logy", False),
        )
    if export_workbook:
        writer.write_workbook()


def main(argv: Optional[List[str]] = None) -> int:
    # 環境変数をロード
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(verbose=args.verbose)

    started_at = datetime.now()
    wall_start = time.perf_counter()

    try:
        engine = ExperimentEngine()
        overrides = load_config_file(args.config) if args.config else {}
        resolved = engine.resolve_config(args.preset, overrides, seed=args.seed, workers=args.workers)
        prepared = engine.prepare(args.command, resolved)
    except ConfigurationError as e:
        logger.error(f"設定エラー: {e}")
        return EXIT_CONFIG

    result = engine.execute(prepared, max_workers=resolved["workers"])

    output_dir = args.out or default_output_dir()
    writer = ReportWriter(output_dir)
    export_workbook = bool(resolved["output_config"].get("export_workbook", OUTPUT_CONFIG["export_workbook"]))
    write_outputs(writer, result, export_workbook)

    exit_code = EXIT_OK if result["success"] else EXIT_TOLERANCE
    for check in result.get("failed_checks", []):
        logger.error(f"許容誤差超過: {check['command']}/{check['name']} "
                     f"(値 {check['value']:.3e}, 許容 {check['tolerance']:.3e})")

    writer.write_manifest(
        command=args.command,
        resolved_config=resolved,
        seeds={"seed": resolved["seed"]},
        started_at=started_at,
        wall_clock_seconds=time.perf_counter() - wall_start,
        stage_timings=result["stage_timings"],
        unit_conversions=result["unit_conversions"],
        exit_code=exit_code,
    )
    passed = sum(1 for c in result["checks"] if c["passed"])
    logger.info(f"完了: チェック {passed}/{len(result['checks'])} 合格, 出力先 {output_dir}")
    return exit_code


if __name__ == "__main__":
    sys.exit(main())
