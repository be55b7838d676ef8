# 対称性強化ダイナミクス検証ラボ - 設定

"""
アプリケーション全体の設定です。
値を変更する場合はこのファイルを直接編集するか、
CLIの --config / フラグで上書きしてください（フラグが最優先）。
"""

# 数値計算設定
NUMERICS_CONFIG = {
    # ヒルベルト空間の最大次元（これを超えると CapacityError）
    "max_dimension": 2 ** 16,

    # 密度行列伝搬の最大次元
    "max_density_dimension": 1024,

    # ボゾンモードのデフォルトカットオフ
    "default_boson_cutoff": 6,

    # 最上位Fock準位の許容占有率
    "truncation_leak_limit": 1e-6,

    # エルミート性の許容誤差
    "hermitian_tol": 1e-14,

    # Krylov部分空間の最大次元
    "krylov_max_dim": 60,

    # 1出力区間あたりの最大サブステップ数
    "krylov_max_substeps": 10_000,

    # べき乗法の収束判定と反復上限
    "power_iteration_tol": 1e-8,
    "power_iteration_max_iter": 10_000,

    # 短時間フィットの許容残差（相対）
    "short_time_residual_limit": 0.01,

    # 短時間フィット窓の上限占有率
    "short_time_population_limit": 0.05,

    # 2準位還元の許容漏れ
    "span_leakage_limit": 0.01,

    # 密度行列の trace / 正値性ゲート
    "trace_drift_limit": 1e-7,
    "positivity_floor": -1e-9,
}

# 並列処理設定
PROCESSING_CONFIG = {
    # デフォルトの並列処理数
    "default_workers": 1,

    # 最大並列処理数
    "max_workers": 16,
}

# 結果出力設定
OUTPUT_CONFIG = {
    # 結果ファイルの保存ディレクトリ
    "output_directory": "results",

    # 出力先を上書きする環境変数（.env でも可）
    "output_dir_env": "SUPERTRANSFER_OUTPUT_DIR",

    # CSVの浮動小数点フォーマット
    "float_format": "%.12g",

    # 全テーブルをまとめた xlsx を出力するか
    "export_workbook": False,

    # ワークブックのファイル名
    "workbook_filename": "report.xlsx",

    # マニフェストのファイル名
    "manifest_filename": "manifest.json",
}

# アプリケーション設定
APP_CONFIG = {
    # CLIのプログラム名
    "prog": "supertransfer-lab",

    # 成果物バージョン（マニフェストに記録）
    "artifact_version": "1.0.0",

    # JSONスキーマバージョン
    "schema_version": "1.0",

    # ログレベル
    "log_level": "INFO",

    # プリセットファイルのパス
    "presets_file": "config/experiment_configs.json",
}

# 検証の許容誤差（受け入れ基準）
TOLERANCE_CONFIG = {
    "matrix_element": 1e-10,
    "short_time_rate_rel": 5e-3,
    "rabi_rel": 1e-6,
    "leakage_zero": 1e-12,
    "leakage_r2": 0.99,
    "dark_state": 1e-12,
    "dephasing_rel": 0.02,
    "decoherence_free": 1e-10,
    "diffusion_rel": 0.10,
    "diffusion_exponent": 0.02,
    "energy_drift": 1e-8,
    "excitation_drift": 1e-9,
    "population_drift": 1e-10,
}
