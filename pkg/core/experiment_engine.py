import copy
import json
import os
import time
from datetime import datetime
from typing import Any, Callable, Dict, List, Optional, Tuple

from config.settings import APP_CONFIG, OUTPUT_CONFIG, PROCESSING_CONFIG
from .base_service import BaseProcessor
from .exceptions import ConfigurationError, LabError, ToleranceFailure
from .experiments import RUNNERS, parse_params

COMMANDS = tuple(RUNNERS)


def load_experiment_presets(path: Optional[str] = None) -> Dict[str, Any]:
    """プリセットJSONを読み込む（id → {name, description, parameters, output_config}）"""
    path = path or APP_CONFIG["presets_file"]
    try:
        with open(path, "r", encoding="utf-8") as f:
            presets = json.load(f)
    except OSError as e:
        raise ConfigurationError(f"cannot read presets file {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"malformed presets file {path}: {e}") from e
    if not isinstance(presets, dict):
        raise ConfigurationError(f"presets file {path} must contain a JSON object")
    return presets


def load_config_file(path: str) -> Dict[str, Any]:
    """--config で渡されたJSONを読み込む"""
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigurationError(f"cannot read config file {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"malformed config file {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigurationError(f"config file {path} must contain a JSON object")
    return data


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


class ExperimentEngine(BaseProcessor):
    """
    検証実験の実行エンジン
    プリセットと設定ファイルから実験パラメータを解決し、サブコマンドごとの実験を実行する
    """

    def __init__(self, presets_file: Optional[str] = None):
        BaseProcessor.__init__(self, "ExperimentEngine")
        self.presets_file = presets_file or APP_CONFIG["presets_file"]
        self.presets = load_experiment_presets(self.presets_file)
        self.log_info(f"実験プリセットを読み込みました: {len(self.presets)}件")

    def get_available_presets(self) -> List[Dict[str, str]]:
        """利用可能なプリセット一覧"""
        return [
            {"id": preset_id, "name": preset.get("name", preset_id), "description": preset.get("description", "")}
            for preset_id, preset in self.presets.items()
        ]

    def get_preset(self, preset_id: str) -> Dict[str, Any]:
        if preset_id not in self.presets:
            raise ConfigurationError(f"unknown preset {preset_id!r}; available: {sorted(self.presets)}")
        return self.presets[preset_id]

    def resolve_config(self, preset_id: str, overrides: Optional[Dict[str, Any]] = None,
                       seed: Optional[int] = None, workers: Optional[int] = None) -> Dict[str, Any]:
        """
        実行設定を解決する

        優先順位: プリセット < 設定ファイル < コマンドラインフラグ
        """
        preset = self.get_preset(preset_id)
        resolved = deep_merge(preset.get("parameters", {}), overrides or {})
        if seed is not None:
            resolved["seed"] = seed
        if workers is not None:
            resolved["workers"] = workers
        resolved.setdefault("seed", 0)
        resolved.setdefault("workers", PROCESSING_CONFIG["default_workers"])

        if isinstance(resolved["seed"], bool) or not isinstance(resolved["seed"], int) or resolved["seed"] < 0:
            raise ConfigurationError(f"seed must be a non-negative integer, got {resolved['seed']!r}")
        if resolved["seed"] >= 2 ** 64:
            raise ConfigurationError("seed must fit in an unsigned 64-bit integer")
        workers_value = resolved["workers"]
        if isinstance(workers_value, bool) or not isinstance(workers_value, int) or workers_value < 1:
            raise ConfigurationError(f"workers must be a positive integer, got {workers_value!r}")
        if workers_value > PROCESSING_CONFIG["max_workers"]:
            self.log_warning(f"workers を上限 {PROCESSING_CONFIG['max_workers']} に制限します")
            resolved["workers"] = PROCESSING_CONFIG["max_workers"]

        resolved["output_config"] = deep_merge(preset.get("output_config", {}), resolved.get("output_config", {}))
        resolved["preset"] = preset_id
        return resolved

    def prepare(self, command: str, resolved: Dict[str, Any]) -> Dict[str, Tuple[Any, List[Dict[str, Any]]]]:
        """
        実行前に全パラメータを検証する（ここで失敗した場合は何も書き出さない）

        Returns:
            コマンド名 → (型付きパラメータ, 単位変換の記録)
        """
        if command != "all" and command not in COMMANDS:
            raise ConfigurationError(f"unknown command {command!r}")
        commands = COMMANDS if command == "all" else (command,)
        prepared = {}
        for name in commands:
            raw = resolved.get(name, {})
            if not isinstance(raw, dict):
                raise ConfigurationError(f"section {name!r} must be a JSON object")
            prepared[name] = parse_params(name, raw, resolved["seed"])
        return prepared

    def execute(self, prepared: Dict[str, Tuple[Any, List[Dict[str, Any]]]], max_workers: int = 1,
                progress_callback: Optional[Callable] = None) -> Dict[str, Any]:
        """
        検証実験を実行

        Returns:
            実行結果（success, summary, tables, plots, checks, stage_timings, executed_at）
        """
        result = {
            "success": True,
            "summary": {},
            "tables": {},
            "plots": [],
            "checks": [],
            "stage_timings": {},
            "unit_conversions": [],
            "executed_at": datetime.now().isoformat(),
        }
        for name, (params, records) in prepared.items():
            self.log_info(f"実験を開始します: {name}")
            result["unit_conversions"].extend(records)
            callback = progress_callback or self.create_progress_callback(name, 0)
            started = time.perf_counter()
            try:
                output = RUNNERS[name](params, max_workers=max_workers, progress_callback=callback)
            except LabError as e:
                error = self.handle_exception(f"{name} 実験", e)
                result["success"] = False
                result["error"] = error["error"]
                result["exception_type"] = error["exception_type"]
                result["stage_timings"][name] = time.perf_counter() - started
                return result
            result["stage_timings"][name] = time.perf_counter() - started

            result["tables"].update(output.tables)
            result["summary"][name] = output.summary
            result["plots"].extend(output.plots)
            for check in output.checks:
                result["checks"].append({"command": name, **check})
            failed = [c["name"] for c in output.checks if not c["passed"]]
            if failed:
                result["success"] = False
                self.log_warning(f"{name}: 許容誤差を超えたチェック {len(failed)}件: {', '.join(failed)}")
            else:
                self.log_info(f"{name}: 全チェック合格（{len(output.checks)}件, {result['stage_timings'][name]:.2f}秒）")

        failed_rows = [c for c in result["checks"] if not c["passed"]]
        if failed_rows:
            failure = ToleranceFailure(f"{len(failed_rows)} verification checks exceeded tolerance", rows=failed_rows)
            error = self.handle_exception("検証", failure)
            result["error"] = error["error"]
            result["exception_type"] = error["exception_type"]
            result["failed_checks"] = failure.rows
        return result

    def process(self, command: str, resolved: Dict[str, Any]) -> Dict[str, Any]:
        """設定検証から実験実行までをまとめて行う"""
        try:
            prepared = self.prepare(command, resolved)
        except ConfigurationError as e:
            return self.handle_exception("設定検証", e)
        return self.execute(prepared, max_workers=resolved["workers"])


def default_output_dir() -> str:
    """出力先（環境変数があれば優先）"""
    return os.environ.get(OUTPUT_CONFIG["output_dir_env"], OUTPUT_CONFIG["output_directory"])
